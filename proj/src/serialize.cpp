// Snapshot/checkpoint container: magic "MATE", u16 format version, u8 dtype
// code (4 = float32, 8 = float64), u8 flags (bit 0: optimizer state), u32
// JSON header length, JSON header, then raw little-endian tensor data in
// header order (row-major within each tensor). Snapshots use float64 so the
// round trip is bit-exact; checkpoint files use float32.

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mate/model.hpp"

namespace mate::net {

namespace {

constexpr char kMagic[4] = {'M', 'A', 'T', 'E'};
constexpr std::uint16_t kFormatVersion = 1;

void append_bytes(std::vector<std::uint8_t>& out, const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + n);
}

void append_matrix(std::vector<std::uint8_t>& out, const Mat& m, int dtype) {
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (dtype == 8) {
        const double v = m(r, c);
        append_bytes(out, &v, sizeof(v));
      } else {
        const float v = static_cast<float>(m(r, c));
        append_bytes(out, &v, sizeof(v));
      }
    }
  }
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  void read(void* out, std::size_t n) {
    if (pos_ + n > size_) {
      throw Error(ErrorCode::CorruptBlob, "blob truncated");
    }
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }

  Mat read_matrix(int rows, int cols, int dtype) {
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        if (dtype == 8) {
          double v;
          read(&v, sizeof(v));
          m(r, c) = v;
        } else {
          float v;
          read(&v, sizeof(v));
          m(r, c) = static_cast<double>(v);
        }
      }
    }
    return m;
  }

  bool exhausted() const { return pos_ == size_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> serialize(const ModelParams& params, int dtype) {
  nlohmann::json header;
  header["config"] = {{"embed_dim", params.config.embed_dim},
                      {"encoder_depth", params.config.encoder_depth},
                      {"decoder_depth", params.config.decoder_depth},
                      {"num_heads", params.config.num_heads},
                      {"mlp_ratio", params.config.mlp_ratio},
                      {"num_classes", params.config.num_classes},
                      {"group_count", params.config.group_count},
                      {"group_size", params.config.group_size},
                      {"dropout_rate", params.config.dropout_rate}};
  header["opt_step"] = params.opt_step;
  header["optimizer"] = true;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : params.tensors) {
    tensors.push_back({{"name", t.name},
                       {"group", param_group_name(t.group)},
                       {"buffer", t.buffer},
                       {"rows", t.value.rows()},
                       {"cols", t.value.cols()}});
  }
  header["tensors"] = std::move(tensors);
  const std::string json = header.dump();

  std::vector<std::uint8_t> out;
  append_bytes(out, kMagic, 4);
  append_bytes(out, &kFormatVersion, sizeof(kFormatVersion));
  const std::uint8_t dt = static_cast<std::uint8_t>(dtype);
  const std::uint8_t flags = 1;  // optimizer state present
  append_bytes(out, &dt, 1);
  append_bytes(out, &flags, 1);
  const std::uint32_t json_len = static_cast<std::uint32_t>(json.size());
  append_bytes(out, &json_len, sizeof(json_len));
  append_bytes(out, json.data(), json.size());

  for (const auto& t : params.tensors) append_matrix(out, t.value, dtype);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    if (params.tensors[i].buffer) continue;
    append_matrix(out, params.opt_m[i], dtype);
    append_matrix(out, params.opt_v[i], dtype);
  }
  return out;
}

ModelParams deserialize(const std::uint8_t* data, std::size_t size) {
  Reader r(data, size);
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorCode::CorruptBlob, "bad magic");
  }
  std::uint16_t version;
  r.read(&version, sizeof(version));
  if (version != kFormatVersion) {
    throw Error(ErrorCode::CorruptBlob,
                "unsupported format version " + std::to_string(version));
  }
  std::uint8_t dtype, flags;
  r.read(&dtype, 1);
  r.read(&flags, 1);
  if (dtype != 4 && dtype != 8) {
    throw Error(ErrorCode::CorruptBlob, "unsupported dtype code");
  }
  std::uint32_t json_len;
  r.read(&json_len, sizeof(json_len));
  std::string json(json_len, '\0');
  r.read(json.data(), json_len);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::CorruptBlob, "header is not valid JSON");
  }

  ModelParams p;
  try {
    const auto& c = header.at("config");
    p.config.embed_dim = c.at("embed_dim").get<int>();
    p.config.encoder_depth = c.at("encoder_depth").get<int>();
    p.config.decoder_depth = c.at("decoder_depth").get<int>();
    p.config.num_heads = c.at("num_heads").get<int>();
    p.config.mlp_ratio = c.at("mlp_ratio").get<double>();
    p.config.num_classes = c.at("num_classes").get<int>();
    p.config.group_count = c.at("group_count").get<int>();
    p.config.group_size = c.at("group_size").get<int>();
    p.config.dropout_rate = c.at("dropout_rate").get<double>();
    p.opt_step = header.at("opt_step").get<std::int64_t>();
    for (const auto& tj : header.at("tensors")) {
      TensorEntry e;
      e.name = tj.at("name").get<std::string>();
      e.group = parse_param_group(tj.at("group").get<std::string>());
      e.buffer = tj.at("buffer").get<bool>();
      e.value = r.read_matrix(tj.at("rows").get<int>(), tj.at("cols").get<int>(), dtype);
      p.tensors.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::CorruptBlob, "header is missing required fields");
  }

  p.opt_m.resize(p.tensors.size());
  p.opt_v.resize(p.tensors.size());
  const bool has_optimizer = (flags & 1) != 0;
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    if (p.tensors[i].buffer) continue;
    const int rows = static_cast<int>(p.tensors[i].value.rows());
    const int cols = static_cast<int>(p.tensors[i].value.cols());
    if (has_optimizer) {
      p.opt_m[i] = r.read_matrix(rows, cols, dtype);
      p.opt_v[i] = r.read_matrix(rows, cols, dtype);
    } else {
      p.opt_m[i] = Mat::Zero(rows, cols);
      p.opt_v[i] = Mat::Zero(rows, cols);
    }
  }
  if (!r.exhausted()) {
    throw Error(ErrorCode::CorruptBlob, "trailing bytes after tensor data");
  }
  return p;
}

}  // namespace

std::vector<std::uint8_t> snapshot(const ModelParams& params) {
  return serialize(params, 8);
}

ModelParams restore(const std::vector<std::uint8_t>& blob) {
  return deserialize(blob.data(), blob.size());
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
  const auto bytes = serialize(params, 4);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IOFailure, "cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::IOFailure, "write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IOFailure, "cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return restore(bytes);
}

}  // namespace mate::net
