#include "tcape/featio.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tcape::featio {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

constexpr char kMagic[4] = {'T', 'F', 'V', '1'};

}  // namespace

std::vector<std::uint8_t> encode(const Tensor& t, Dtype dtype) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(dtype));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.dims()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) {
    if (dtype == Dtype::f32) {
      put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      put_le(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

Tensor decode(std::span<const std::uint8_t> b) {
  using K = FormatError::Kind;
  if (b.size() < 12) throw FormatError(K::truncated, "feature file: header truncated");
  if (std::memcmp(b.data(), kMagic, 4) != 0) throw FormatError(K::bad_magic, "feature file: bad magic");
  const std::uint32_t code = get_u32(b, 4);
  if (code > 1) throw FormatError(K::bad_dtype, "feature file: unknown dtype code " + std::to_string(code));
  const std::uint32_t rank = get_u32(b, 8);
  if (rank == 0 || rank > 8) throw FormatError(K::bad_rank, "feature file: unsupported rank " + std::to_string(rank));
  if (b.size() < 12 + 4ull * rank) throw FormatError(K::truncated, "feature file: dims truncated");
  Tensor::Shape dims(rank);
  for (std::uint32_t i = 0; i < rank; ++i) dims[i] = get_u32(b, 12 + 4 * i);
  const std::size_t n = shape_size(dims);
  const std::size_t width = code == 0 ? 4 : 8;
  const std::size_t offset = 12 + 4ull * rank;
  if (b.size() - offset != n * width) {
    throw FormatError(K::truncated, "feature file: payload has " + std::to_string(b.size() - offset) +
                                        " bytes, expected " + std::to_string(n * width));
  }
  std::vector<double> data(n);
  const std::uint8_t* p = b.data() + offset;
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = code == 0 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i)))
                        : std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i));
  }
  return Tensor(std::move(dims), std::move(data));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype) {
  const auto bytes = encode(t, dtype);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(FormatError::Kind::io, "cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError(FormatError::Kind::io, "write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(FormatError::Kind::io, "cannot open feature file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), std::string(e.what()) + " (" + path.string() + ")");
  }
}

Tensor mean_over_crops(const Tensor& crops) {
  if (crops.rank() != 3) throw ShapeError("mean_over_crops: expected crops×T×D, got " + crops.shape_string());
  const std::size_t nc = crops.dims()[0], T = crops.dims()[1], D = crops.dims()[2];
  if (nc == 0) throw ShapeError("mean_over_crops: zero crops");
  Tensor out({T, D}, 0.0);
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t i = 0; i < T * D; ++i) out[i] += crops[c * T * D + i];
  for (double& v : out.storage()) v /= static_cast<double>(nc);
  return out;
}

Tensor load_features(const std::filesystem::path& path) {
  Tensor t = read_tensor(path);
  if (t.rank() == 2) return t;
  if (t.rank() == 3) return mean_over_crops(t);
  throw FormatError(FormatError::Kind::bad_rank,
                    "feature file: rank must be 2 or 3, got " + t.shape_string() + " (" + path.string() + ")");
}

std::vector<Tensor> load_feature_crops(const std::filesystem::path& path) {
  Tensor t = read_tensor(path);
  if (t.rank() == 2) return {std::move(t)};
  if (t.rank() != 3) {
    throw FormatError(FormatError::Kind::bad_rank, "feature file: rank must be 2 or 3 (" + path.string() + ")");
  }
  const std::size_t nc = t.dims()[0], T = t.dims()[1], D = t.dims()[2];
  std::vector<Tensor> crops;
  for (std::size_t c = 0; c < nc; ++c) {
    auto first = t.storage().begin() + static_cast<std::ptrdiff_t>(c * T * D);
    crops.emplace_back(Tensor::Shape{T, D}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(T * D)));
  }
  return crops;
}

Tensor sample_snippets(const Tensor& x, std::size_t limit) {
  if (limit == 0) throw Error("sample_snippets: limit must be at least 1");
  if (x.rank() != 2) throw ShapeError("sample_snippets: expected T×D, got " + x.shape_string());
  const std::size_t T = x.rows(), D = x.cols();
  if (T == 0) throw Error("sample_snippets: empty feature sequence");
  if (T <= limit) return x;
  Tensor out({limit, D}, 0.0);
  for (std::size_t s = 0; s < limit; ++s) {
    const std::size_t lo = s * T / limit;
    const std::size_t hi = (s + 1) * T / limit;
    for (std::size_t t = lo; t < hi; ++t)
      for (std::size_t j = 0; j < D; ++j) out(s, j) += x(t, j);
    for (std::size_t j = 0; j < D; ++j) out(s, j) /= static_cast<double>(hi - lo);
  }
  return out;
}

std::vector<double> expand_to_frames(std::span<const double> scores, std::size_t frame_count) {
  if (scores.empty()) throw Error("expand_to_frames: empty score sequence");
  if (frame_count == 0) throw Error("expand_to_frames: frame_count must be at least 1");
  std::vector<double> out(frame_count);
  for (std::size_t f = 0; f < frame_count; ++f) {
    out[f] = scores[std::min(f / kFramesPerSnippet, scores.size() - 1)];
  }
  return out;
}

std::string frames_to_string(std::span<const std::uint8_t> frames) {
  std::string s(frames.size(), '0');
  for (std::size_t i = 0; i < frames.size(); ++i)
    if (frames[i]) s[i] = '1';
  return s;
}

Manifest Manifest::load(const std::filesystem::path& path, bool check_files) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.parent_path(), check_files);
}

Manifest Manifest::parse(const std::string& text, const std::filesystem::path& base_dir, bool check_files) {
  using nlohmann::json;
  static const std::set<std::string> known = {"id", "features", "label", "class", "frames", "split"};
  Manifest m;
  std::set<std::string> ids;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(where + ": " + e.what());
    }
    if (!j.is_object()) throw Error(where + ": expected a JSON object");
    for (const auto& [k, _] : j.items())
      if (!known.count(k)) throw Error(where + ": unknown field \"" + k + "\"");
    VideoRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.features = j.at("features").get<std::string>();
      r.label = j.at("label").get<int>();
      const auto& c = j.at("class");
      if (c.is_array()) {
        r.classes = c.get<std::vector<std::string>>();
      } else {
        r.classes = {c.get<std::string>()};
      }
      const std::string split = j.value("split", "train");
      if (split == "train") r.split = Split::train;
      else if (split == "test") r.split = Split::test;
      else throw Error(where + ": split must be train or test");
      if (j.contains("frames") && !j["frames"].is_null()) {
        std::vector<std::uint8_t> fr;
        const auto& f = j["frames"];
        if (f.is_string()) {
          for (char ch : f.get<std::string>()) {
            if (ch != '0' && ch != '1') throw Error(where + ": frames string must contain only 0/1");
            fr.push_back(ch == '1');
          }
        } else {
          for (const auto& v : f) fr.push_back(v.get<int>() != 0);
        }
        r.frames = std::move(fr);
      }
    } catch (const json::exception& e) {
      throw Error(where + ": " + e.what());
    }
    if (r.label != 0 && r.label != 1) throw Error(where + ": label must be 0 or 1");
    if (r.classes.empty() || r.classes.front().empty()) throw Error(where + ": class is empty");
    if (r.label == 0 && r.primary_class() != kNormalClass) {
      throw Error(where + ": normal video (label 0) must have class \"normal\"");
    }
    if (r.label == 1 && r.primary_class() == kNormalClass) {
      throw Error(where + ": abnormal video cannot have class \"normal\"");
    }
    if (r.frames && r.split != Split::test) {
      throw Error(where + ": frame ground truth is only allowed on test videos");
    }
    if (!ids.insert(r.id).second) throw Error(where + ": duplicate id \"" + r.id + "\"");
    if (r.features.is_relative() && !base_dir.empty()) r.features = base_dir / r.features;
    if (check_files && !std::filesystem::exists(r.features)) {
      throw Error(where + ": feature file not found: " + r.features.string());
    }
    m.videos.push_back(std::move(r));
  }
  return m;
}

std::string Manifest::serialize(const std::filesystem::path& base_dir) const {
  using nlohmann::ordered_json;
  std::string out;
  for (const auto& r : videos) {
    ordered_json j;
    j["id"] = r.id;
    auto path = r.features;
    if (!base_dir.empty() && path.is_absolute() == base_dir.is_absolute()) {
      auto rel = path.lexically_relative(base_dir);
      if (!rel.empty() && *rel.begin() != "..") path = rel;
    }
    j["features"] = path.generic_string();
    j["label"] = r.label;
    if (r.classes.size() == 1) j["class"] = r.classes.front();
    else j["class"] = r.classes;
    if (r.frames) j["frames"] = frames_to_string(*r.frames);
    j["split"] = r.split == Split::train ? "train" : "test";
    out += j.dump();
    out += '\n';
  }
  return out;
}

void Manifest::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write manifest " + path.string());
  os << serialize(path.parent_path());
}

std::vector<const VideoRecord*> Manifest::split(Split s) const {
  std::vector<const VideoRecord*> out;
  for (const auto& v : videos)
    if (v.split == s) out.push_back(&v);
  return out;
}

const VideoRecord* Manifest::find(const std::string& id) const {
  for (const auto& v : videos)
    if (v.id == id) return &v;
  return nullptr;
}

}  // namespace tcape::featio
