#include "emadapt/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "emadapt/error.hpp"
#include "emadapt/text.hpp"

namespace emadapt {

static_assert(std::endian::native == std::endian::little,
              "binary caches assume a little-endian host");

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct PgmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t payload_offset = 0;
};

PgmHeader parse_header(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space_and_comments();
    long long value = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1'000'000'000) throw Error(ErrorCode::kMalformedHeader, "value too large");
      ++pos;
      ++digits;
    }
    if (digits == 0) {
      throw Error(ErrorCode::kMalformedHeader, std::string("missing ") + what);
    }
    return static_cast<int>(value);
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw Error(ErrorCode::kMalformedHeader, "not a P5 PGM file");
  }
  pos = 2;
  PgmHeader h;
  h.width = read_int("width");
  h.height = read_int("height");
  h.maxval = read_int("maxval");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw Error(ErrorCode::kMalformedHeader, "missing whitespace after maxval");
  }
  h.payload_offset = pos + 1;
  if (h.width < 1 || h.height < 1) throw Error(ErrorCode::kMalformedHeader, "empty raster");
  if (h.maxval < 1 || h.maxval > 65535) throw Error(ErrorCode::kMalformedHeader, "bad maxval");
  return h;
}

std::vector<std::uint8_t> header_bytes(int width, int height, int maxval) {
  const std::string h =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n" +
      std::to_string(maxval) + "\n";
  return {h.begin(), h.end()};
}

std::size_t area(const PgmHeader& h) {
  return static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height);
}

}  // namespace

GrayImage decode_image(std::span<const std::uint8_t> bytes) {
  const PgmHeader h = parse_header(bytes);
  if (h.maxval != 255) {
    throw Error(ErrorCode::kUnsupportedDepth,
                "image maxval must be 255, got " + std::to_string(h.maxval));
  }
  const std::size_t n = area(h);
  if (bytes.size() - h.payload_offset < n) {
    throw Error(ErrorCode::kTruncatedPayload, "image payload shorter than width*height");
  }
  std::vector<std::uint8_t> pixels(bytes.begin() + h.payload_offset,
                                   bytes.begin() + h.payload_offset + n);
  return GrayImage(h.width, h.height, std::move(pixels));
}

std::vector<std::uint8_t> encode_image(const GrayImage& image) {
  auto out = header_bytes(image.width(), image.height(), 255);
  out.insert(out.end(), image.pixels().begin(), image.pixels().end());
  return out;
}

LabelMap decode_labels(std::span<const std::uint8_t> bytes) {
  const PgmHeader h = parse_header(bytes);
  if (h.maxval != 65535) {
    throw Error(ErrorCode::kUnsupportedDepth,
                "label maxval must be 65535, got " + std::to_string(h.maxval));
  }
  const std::size_t n = area(h);
  if (bytes.size() - h.payload_offset < 2 * n) {
    throw Error(ErrorCode::kTruncatedPayload, "label payload shorter than 2*width*height");
  }
  std::vector<std::uint32_t> labels(n);
  const std::uint8_t* p = bytes.data() + h.payload_offset;
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = (static_cast<std::uint32_t>(p[2 * i]) << 8) | p[2 * i + 1];
  }
  return LabelMap(h.width, h.height, std::move(labels));
}

std::vector<std::uint8_t> encode_labels(const LabelMap& labels) {
  auto out = header_bytes(labels.width(), labels.height(), 65535);
  out.reserve(out.size() + 2 * labels.size());
  for (std::uint32_t l : labels.labels()) {
    if (l > 65535) {
      throw Error(ErrorCode::kLabelOverflow,
                  "instance id " + std::to_string(l) + " exceeds 65535");
    }
    out.push_back(static_cast<std::uint8_t>(l >> 8));
    out.push_back(static_cast<std::uint8_t>(l & 0xFF));
  }
  return out;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span<const std::uint8_t>(
                       reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

GrayImage load_image(const fs::path& path) { return decode_image(read_file(path)); }

void save_image(const GrayImage& image, const fs::path& path) {
  write_file(path, encode_image(image));
}

LabelMap load_labels(const fs::path& path) { return decode_labels(read_file(path)); }

void save_labels(const LabelMap& labels, const fs::path& path) {
  // Encode first so an overflow leaves no partial file behind.
  const auto bytes = encode_labels(labels);
  write_file(path, bytes);
}

void save_embedding(const EmbeddingRecord& record, const fs::path& stem) {
  std::vector<std::uint8_t> blob(record.embedding.size() * sizeof(float));
  for (std::size_t i = 0; i < record.embedding.size(); ++i) {
    const float v = static_cast<float>(record.embedding[i]);
    std::memcpy(blob.data() + i * sizeof(float), &v, sizeof(float));
  }
  write_file(fs::path(stem.string() + ".f32"), blob);
  json sidecar = {{"length", record.embedding.size()},
                  {"model_hash", record.model_hash},
                  {"image_id", record.image_id},
                  {"dtype", "float32-le"}};
  write_text(fs::path(stem.string() + ".json"), sidecar.dump(2) + "\n");
}

EmbeddingRecord load_embedding(const fs::path& stem) {
  const json sidecar = json::parse(read_text(fs::path(stem.string() + ".json")));
  const auto blob = read_file(fs::path(stem.string() + ".f32"));
  const std::size_t length = sidecar.at("length").get<std::size_t>();
  if (blob.size() != length * sizeof(float)) {
    throw Error(ErrorCode::kTruncatedPayload, "embedding blob length does not match sidecar");
  }
  std::vector<double> values(length);
  for (std::size_t i = 0; i < length; ++i) {
    float v = 0.0F;
    std::memcpy(&v, blob.data() + i * sizeof(float), sizeof(float));
    values[i] = v;
  }
  return {sidecar.at("image_id").get<std::string>(), sidecar.at("model_hash").get<std::string>(),
          EmbeddingVec(std::move(values))};
}

void save_domain_split(const DomainPool& pool, const fs::path& root, const std::string& split) {
  const fs::path dir = root / pool.name() / split;
  fs::create_directories(dir);
  std::string flags = "image_id,white_stripe,black_tile,contrast\n";
  for (const Sample& s : pool.samples()) {
    save_image(s.image, dir / (s.id + ".pgm"));
    if (s.labels) save_labels(*s.labels, dir / (s.id + ".labels.pgm"));
    flags += s.id + "," + std::to_string(int(s.artifacts.white_stripe)) + "," +
             std::to_string(int(s.artifacts.black_tile)) + "," +
             std::to_string(int(s.artifacts.contrast)) + "\n";
  }
  write_text(dir / "artifacts.csv", flags);
}

DomainPool load_domain_split(const fs::path& root, const std::string& domain,
                             const std::string& split) {
  const fs::path dir = root / domain / split;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, "no such split directory " + dir.string());

  std::map<std::string, ArtifactFlags> flags;
  if (fs::exists(dir / "artifacts.csv")) {
    const auto rows = parse_csv(read_text(dir / "artifacts.csv"));
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() < 4) continue;
      flags[rows[r][0]] = {rows[r][1] == "1", rows[r][2] == "1", rows[r][3] == "1"};
    }
  }

  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string fname = entry.path().filename().string();
    if (fname.ends_with(".labels.pgm") || !fname.ends_with(".pgm")) continue;
    ids.push_back(fname.substr(0, fname.size() - 4));
  }
  std::sort(ids.begin(), ids.end());

  std::vector<Sample> samples;
  for (const std::string& id : ids) {
    Sample s;
    s.id = id;
    s.image = load_image(dir / (id + ".pgm"));
    const fs::path lp = dir / (id + ".labels.pgm");
    if (fs::exists(lp)) s.labels = load_labels(lp);
    if (auto it = flags.find(id); it != flags.end()) s.artifacts = it->second;
    samples.push_back(std::move(s));
  }
  return DomainPool(domain, std::move(samples));
}

}  // namespace emadapt
