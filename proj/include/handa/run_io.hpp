#pragma once

// Run-directory artifacts: loss traces, metrics and embedding dumps.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "handa/numerics.hpp"
#include "handa/trainer.hpp"

namespace handa {

// Ordered "key: value" lines.
using Metrics = std::vector<std::pair<std::string, std::string>>;

inline constexpr const char* kTracesHeader = "iter,l_sdl,l_adv,l_c";
inline constexpr const char* kEmbeddingsHeader = "dim1,dim2,label,split";

void write_traces_csv(const std::filesystem::path& path, const LossTraces& traces);
LossTraces read_traces_csv(const std::filesystem::path& path);

void write_metrics(const std::filesystem::path& path, const Metrics& metrics);
Metrics read_metrics(const std::filesystem::path& path);

struct EmbeddingRow {
  double dim1 = 0.0;
  double dim2 = 0.0;
  int label = 0;
  std::string split;  // labeled | unlabeled | test
};

void write_embeddings_csv(const std::filesystem::path& path, const std::vector<EmbeddingRow>& rows);

// Writes `content` to a sibling temp file and renames it into place, so a
// failed run never leaves a partial artifact.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace handa
