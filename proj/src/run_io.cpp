#include "handa/run_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "handa/data.hpp"
#include "handa/errors.hpp"

namespace handa {

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(tmp.string(), 0, "cannot open for writing");
    out << content;
    if (!out) throw FormatError(tmp.string(), 0, "write failed");
  }
  std::filesystem::rename(tmp, path);
}

void write_traces_csv(const std::filesystem::path& path, const LossTraces& traces) {
  std::string s = std::string(kTracesHeader) + "\n";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    s += std::to_string(traces.iter[i]) + "," + format_double(traces.sdl[i]) + "," + format_double(traces.adv[i]) +
         "," + format_double(traces.cls[i]) + "\n";
  }
  write_file_atomic(path, s);
}

LossTraces read_traces_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), 0, "cannot open file");
  std::string line;
  if (!std::getline(in, line) || line != kTracesHeader) throw FormatError(path.string(), 1, "bad traces header");
  LossTraces t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string f[4];
    for (auto& field : f) {
      if (!std::getline(row, field, ',')) throw FormatError(path.string(), lineno, "expected 4 fields");
    }
    try {
      t.push(std::stoull(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]));
    } catch (const std::exception&) {
      throw FormatError(path.string(), lineno, "unparsable number");
    }
  }
  return t;
}

void write_metrics(const std::filesystem::path& path, const Metrics& metrics) {
  std::string s;
  for (const auto& [k, v] : metrics) s += k + ": " + v + "\n";
  write_file_atomic(path, s);
}

Metrics read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), 0, "cannot open file");
  Metrics m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto pos = line.find(": ");
    if (pos == std::string::npos) throw FormatError(path.string(), lineno, "expected 'key: value'");
    m.emplace_back(line.substr(0, pos), line.substr(pos + 2));
  }
  return m;
}

void write_embeddings_csv(const std::filesystem::path& path, const std::vector<EmbeddingRow>& rows) {
  std::string s = std::string(kEmbeddingsHeader) + "\n";
  for (const auto& r : rows) {
    s += format_double(r.dim1) + "," + format_double(r.dim2) + "," + std::to_string(r.label) + "," + r.split + "\n";
  }
  write_file_atomic(path, s);
}

}  // namespace handa
