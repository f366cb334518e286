#pragma once

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "realm/core.hpp"

namespace realm {

// Line-oriented dataset format, three sections. Column order is documented in
// docs/formats.md. Floats use %.17g so a write/read cycle is bit-exact.
//
//   realm-dataset v1
//   [tasks] count=<M> vocab=<V>
//   <task_id> <k> <tok,tok,...>
//   [examples] count=<n> d_in=<d>
//   <example_id> <task_id> <split 0=train|1=test> <true_label> <f,f,...>
//   [annotations] count=<n> n_annotators=<N> mode=<exclusive|shared>
//   <example_id> <annotator_id> <observed_label>

namespace detail {

inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& s, int line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw std::runtime_error("dataset line " + std::to_string(line_no) +
                             ": bad float '" + s + "'");
  return v;
}

inline long parse_int(const std::string& s, int line_no) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw std::runtime_error("dataset line " + std::to_string(line_no) +
                             ": bad integer '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// "key=value" attributes on a section header line.
inline std::string header_attr(const std::vector<std::string>& fields,
                               const std::string& key, int line_no) {
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto kv = split(fields[i], '=');
    if (kv.size() == 2 && kv[0] == key) return kv[1];
  }
  throw std::runtime_error("dataset line " + std::to_string(line_no) +
                           ": missing attribute '" + key + "'");
}

}  // namespace detail

inline void write_dataset(const Dataset& ds, std::ostream& os) {
  os << "realm-dataset v1\n";
  os << "[tasks] count=" << ds.tasks.size() << " vocab=" << ds.vocab_size
     << "\n";
  for (const TaskSpec& t : ds.tasks) {
    os << t.task_id << ' ' << t.k << ' ';
    for (int j = 0; j < t.k; ++j)
      os << (j ? "," : "") << t.answer_token_ids[j];
    os << '\n';
  }
  os << "[examples] count="
     << ds.train_examples.size() + ds.test_examples.size()
     << " d_in=" << (ds.train_examples.empty()
                         ? (ds.test_examples.empty()
                                ? 0
                                : ds.test_examples[0].features.size())
                         : ds.train_examples[0].features.size())
     << "\n";
  auto write_example = [&os](const Example& e, int split) {
    os << e.example_id << ' ' << e.task_id << ' ' << split << ' '
       << e.true_label << ' ';
    for (std::size_t j = 0; j < e.features.size(); ++j)
      os << (j ? "," : "") << detail::fmt_double(e.features[j]);
    os << '\n';
  };
  for (const Example& e : ds.train_examples) write_example(e, 0);
  for (const Example& e : ds.test_examples) write_example(e, 1);
  os << "[annotations] count=" << ds.annotations.size()
     << " n_annotators=" << ds.n_annotators << " mode=" << to_string(ds.mode)
     << "\n";
  for (const AnnotationRecord& r : ds.annotations)
    os << r.example_id << ' ' << r.annotator_id << ' ' << r.observed_label
       << '\n';
}

inline Dataset read_dataset(std::istream& is) {
  Dataset ds;
  std::string line;
  int line_no = 0;
  auto fail = [&line_no](const std::string& msg) -> std::runtime_error {
    return std::runtime_error("dataset line " + std::to_string(line_no) +
                              ": " + msg);
  };

  if (!std::getline(is, line)) throw fail("empty file");
  ++line_no;
  if (line != "realm-dataset v1") throw fail("bad magic '" + line + "'");

  enum Section { none, tasks, examples, annotations } section = none;
  std::size_t expect_tasks = 0, expect_examples = 0, expect_annotations = 0;
  int d_in = -1;

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = detail::split(line, ' ');
    if (line[0] == '[') {
      if (fields[0] == "[tasks]") {
        section = tasks;
        expect_tasks = detail::parse_int(
            detail::header_attr(fields, "count", line_no), line_no);
        ds.vocab_size = static_cast<int>(detail::parse_int(
            detail::header_attr(fields, "vocab", line_no), line_no));
      } else if (fields[0] == "[examples]") {
        section = examples;
        expect_examples = detail::parse_int(
            detail::header_attr(fields, "count", line_no), line_no);
        d_in = static_cast<int>(detail::parse_int(
            detail::header_attr(fields, "d_in", line_no), line_no));
      } else if (fields[0] == "[annotations]") {
        section = annotations;
        expect_annotations = detail::parse_int(
            detail::header_attr(fields, "count", line_no), line_no);
        ds.n_annotators = static_cast<int>(detail::parse_int(
            detail::header_attr(fields, "n_annotators", line_no), line_no));
        const std::string mode = detail::header_attr(fields, "mode", line_no);
        if (mode == "exclusive")
          ds.mode = AnnotationMode::exclusive;
        else if (mode == "shared")
          ds.mode = AnnotationMode::shared;
        else
          throw fail("unknown mode '" + mode + "'");
      } else {
        throw fail("unknown section '" + fields[0] + "'");
      }
      continue;
    }

    switch (section) {
      case none:
        throw fail("data before first section header");
      case tasks: {
        if (fields.size() != 3) throw fail("task row needs 3 columns");
        const int task_id =
            static_cast<int>(detail::parse_int(fields[0], line_no));
        const int k = static_cast<int>(detail::parse_int(fields[1], line_no));
        std::vector<int> tokens;
        for (const std::string& s : detail::split(fields[2], ','))
          tokens.push_back(static_cast<int>(detail::parse_int(s, line_no)));
        try {
          ds.tasks.emplace_back(task_id, k, std::move(tokens), ds.vocab_size);
        } catch (const std::invalid_argument& e) {
          throw fail(e.what());
        }
        break;
      }
      case examples: {
        if (fields.size() != 5) throw fail("example row needs 5 columns");
        const int example_id =
            static_cast<int>(detail::parse_int(fields[0], line_no));
        const int task_id =
            static_cast<int>(detail::parse_int(fields[1], line_no));
        const int split =
            static_cast<int>(detail::parse_int(fields[2], line_no));
        const int true_label =
            static_cast<int>(detail::parse_int(fields[3], line_no));
        if (task_id < 0 || task_id >= static_cast<int>(ds.tasks.size()))
          throw fail("dangling task id " + std::to_string(task_id));
        if (split != 0 && split != 1) throw fail("split must be 0 or 1");
        std::vector<double> feats;
        for (const std::string& s : detail::split(fields[4], ','))
          feats.push_back(detail::parse_double(s, line_no));
        if (d_in >= 0 && static_cast<int>(feats.size()) != d_in)
          throw fail("feature count != d_in");
        try {
          Example e(example_id, std::move(feats), true_label,
                    ds.tasks[task_id]);
          (split == 0 ? ds.train_examples : ds.test_examples)
              .push_back(std::move(e));
        } catch (const std::invalid_argument& e) {
          throw fail(e.what());
        }
        break;
      }
      case annotations: {
        if (fields.size() != 3) throw fail("annotation row needs 3 columns");
        ds.annotations.push_back(AnnotationRecord{});
        AnnotationRecord& r = ds.annotations.back();
        r.example_id = static_cast<int>(detail::parse_int(fields[0], line_no));
        r.annotator_id =
            static_cast<int>(detail::parse_int(fields[1], line_no));
        r.observed_label =
            static_cast<int>(detail::parse_int(fields[2], line_no));
        break;
      }
    }
  }

  if (ds.tasks.size() != expect_tasks)
    throw std::runtime_error("dataset: task count mismatch (" +
                             std::to_string(ds.tasks.size()) + " vs header " +
                             std::to_string(expect_tasks) + ")");
  if (ds.train_examples.size() + ds.test_examples.size() != expect_examples)
    throw std::runtime_error("dataset: example count mismatch");
  if (ds.annotations.size() != expect_annotations)
    throw std::runtime_error("dataset: annotation count mismatch");
  return ds;
}

inline std::string dataset_to_string(const Dataset& ds) {
  std::ostringstream os;
  write_dataset(ds, os);
  return os.str();
}

inline Dataset dataset_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_dataset(is);
}

}  // namespace realm
