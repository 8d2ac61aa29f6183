#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ccmc/core.hpp"
#include "ccmc/errors.hpp"

namespace ccmc {

/// Shortest exact decimal form of a double (17 significant digits round-trip).
/// CSV/JSON artifacts always use '.' as the decimal separator and never
/// depend on the global locale.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string prompt_to_string(const Prompt& prompt) {
  std::string out;
  for (std::size_t i = 0; i < prompt.tokens.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(prompt.tokens[i]);
  }
  return out;
}

inline Prompt prompt_from_string(const std::string& text, AttnVariant variant) {
  Prompt p;
  p.variant = variant;
  std::istringstream in(text);
  int tok;
  while (in >> tok) p.tokens.push_back(tok);
  if (!in.eof() || p.tokens.empty())
    throw IoError("malformed prompt field: '" + text + "'");
  return p;
}

/// CSV dump of a transition matrix: header k0..k{K-1}, then the matrix
/// row by row (column i of the matrix is the law out of state i).
inline std::string transition_to_csv(const TransitionMatrix& t) {
  const int k = t.vocab();
  std::string out;
  for (int c = 0; c < k; ++c) {
    if (c) out += ',';
    out += 'k' + std::to_string(c);
  }
  out += '\n';
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      if (c) out += ',';
      out += format_double(t.p(r, c));
    }
    out += '\n';
  }
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline TransitionMatrix transition_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty transition CSV");
  const int k = static_cast<int>(split_csv_line(line).size());
  Eigen::MatrixXd m(k, k);
  for (int r = 0; r < k; ++r) {
    if (!std::getline(in, line))
      throw IoError("transition CSV truncated at row " + std::to_string(r));
    auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != k)
      throw IoError("transition CSV row " + std::to_string(r) + " has " +
                    std::to_string(fields.size()) + " fields, expected " +
                    std::to_string(k));
    for (int c = 0; c < k; ++c) {
      try {
        m(r, c) = std::stod(fields[c]);
      } catch (const std::exception&) {
        throw IoError("bad number '" + fields[c] + "' in transition CSV");
      }
    }
  }
  return TransitionMatrix::from(std::move(m));
}

/// CSV dump of a dataset: header "prompt,next"; the prompt field holds
/// whitespace-separated 0-based token ids.
inline std::string dataset_to_csv(const Dataset& data) {
  std::string out = "prompt,next\n";
  for (const auto& s : data.samples) {
    out += prompt_to_string(s.prompt);
    out += ',';
    out += std::to_string(s.next);
    out += '\n';
  }
  return out;
}

inline Dataset dataset_from_csv(const std::string& csv, int vocab,
                                AttnVariant variant) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"prompt", "next"})
    throw IoError("dataset CSV must start with header 'prompt,next'");
  std::vector<Sample> samples;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 2)
      throw IoError("dataset CSV line needs exactly two fields: '" + line + "'");
    Sample s;
    s.prompt = prompt_from_string(fields[0], variant);
    try {
      s.next = std::stoi(fields[1]);
    } catch (const std::exception&) {
      throw IoError("bad label '" + fields[1] + "' in dataset CSV");
    }
    samples.push_back(std::move(s));
  }
  return Dataset::from(std::move(samples), vocab);
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("short write: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace ccmc
