#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "json.hpp"

#include "mfsf/nnmath.hpp"

namespace mfsf {

namespace {

constexpr char kMagic[] = "MFSF01";
constexpr std::size_t kMagicLen = 6;

void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t x = 0;
  for (int i = 7; i >= 0; --i) x = (x << 8) | p[i];
  return x;
}

}  // namespace

bool operator==(const TensorSlot& a, const TensorSlot& b) {
  return a.offset == b.offset && a.rows == b.rows && a.cols == b.cols;
}

TensorSlot ParamStore::add(const std::string& name, Index rows, Index cols) {
  require(rows > 0 && cols > 0, ErrorKind::InvalidArgument,
          "tensor '" + name + "' must have positive shape");
  require(!contains(name), ErrorKind::InvalidArgument, "duplicate tensor name '" + name + "'");
  TensorSlot s{values_.size(), rows, cols};
  values_.resize(values_.size() + s.size(), 0.0);
  grads_.resize(values_.size(), 0.0);
  layout_.push_back({name, s});
  return s;
}

const TensorSlot& ParamStore::slot(const std::string& name) const {
  for (const auto& r : layout_)
    if (r.name == name) return r.slot;
  fail(ErrorKind::InvalidArgument, "no tensor named '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& r : layout_)
    if (r.name == name) return true;
  return false;
}

Eigen::Map<Matrix> ParamStore::value(const TensorSlot& s) {
  return {values_.data() + s.offset, s.rows, s.cols};
}
Eigen::Map<const Matrix> ParamStore::value(const TensorSlot& s) const {
  return {values_.data() + s.offset, s.rows, s.cols};
}
Eigen::Map<Matrix> ParamStore::grad(const TensorSlot& s) {
  return {grads_.data() + s.offset, s.rows, s.cols};
}
Eigen::Map<const Matrix> ParamStore::grad(const TensorSlot& s) const {
  return {grads_.data() + s.offset, s.rows, s.cols};
}

void ParamStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (double g : grads_) s += g * g;
  return std::sqrt(s);
}

void ParamStore::assign_values(const ParamStore& other) {
  require(same_layout(other), ErrorKind::DimensionMismatch,
          "parameter layouts differ (" + std::to_string(other.size()) + " vs " +
              std::to_string(size()) + " values)");
  values_ = other.values_;
}

void ParamStore::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["count"] = values_.size();
  auto& layout = header["layout"] = nlohmann::json::array();
  for (const auto& r : layout_)
    layout.push_back({{"name", r.name}, {"offset", r.slot.offset}, {"rows", r.slot.rows},
                      {"cols", r.slot.cols}});
  const std::string text = header.dump();

  std::string blob(kMagic, kMagicLen);
  put_u64(blob, text.size());
  blob += text;
  blob.reserve(blob.size() + 8 * values_.size());
  for (double v : values_) put_u64(blob, std::bit_cast<std::uint64_t>(v));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "short write to " + path.string());
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());

  require(blob.size() >= kMagicLen + 8 && blob.compare(0, kMagicLen, kMagic) == 0,
          ErrorKind::Io, path.string() + ": not a parameter file (bad magic)");
  const std::uint64_t header_len = get_u64(bytes + kMagicLen);
  require(blob.size() >= kMagicLen + 8 + header_len, ErrorKind::Io,
          path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(kMagicLen + 8, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, path.string() + ": bad header: " + e.what());
  }

  ParamStore store;
  for (const auto& r : header.at("layout")) {
    const TensorSlot s = store.add(r.at("name").get<std::string>(), r.at("rows").get<Index>(),
                                   r.at("cols").get<Index>());
    require(s.offset == r.at("offset").get<std::size_t>(), ErrorKind::Io,
            path.string() + ": non-contiguous layout");
  }
  const std::size_t count = header.at("count").get<std::size_t>();
  require(count == store.size(), ErrorKind::Io, path.string() + ": layout does not cover values");
  const std::size_t data_at = kMagicLen + 8 + header_len;
  require(blob.size() == data_at + 8 * count, ErrorKind::Io,
          path.string() + ": value block has wrong length");
  for (std::size_t i = 0; i < count; ++i)
    store.values_[i] = std::bit_cast<double>(get_u64(bytes + data_at + 8 * i));
  return store;
}

}  // namespace mfsf
