#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "emadapt/datamodel.hpp"

namespace emadapt {

// PGM P5 codecs. Images are 8-bit (maxval 255); label maps are 16-bit
// (maxval 65535, big-endian samples). Writers always emit the canonical
// header "P5\n<w> <h>\n<maxval>\n".
GrayImage decode_image(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_image(const GrayImage& image);
LabelMap decode_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_labels(const LabelMap& labels);

GrayImage load_image(const std::filesystem::path& path);
void save_image(const GrayImage& image, const std::filesystem::path& path);
LabelMap load_labels(const std::filesystem::path& path);
void save_labels(const LabelMap& labels, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// Embedding cache: <stem>.f32 holds little-endian float32 values, <stem>.json
// the sidecar {length, model_hash, image_id}.
struct EmbeddingRecord {
  std::string image_id;
  std::string model_hash;
  EmbeddingVec embedding;
};

void save_embedding(const EmbeddingRecord& record, const std::filesystem::path& stem);
EmbeddingRecord load_embedding(const std::filesystem::path& stem);

// Directory layout <root>/<domain>/<split>/<id>.pgm with <id>.labels.pgm next
// to it. Artifact flags live in <root>/<domain>/<split>/artifacts.csv.
void save_domain_split(const DomainPool& pool, const std::filesystem::path& root,
                       const std::string& split);
DomainPool load_domain_split(const std::filesystem::path& root, const std::string& domain,
                             const std::string& split);

}  // namespace emadapt
