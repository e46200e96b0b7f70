#include "nsl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace nsl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  explicit Writer(std::ofstream& os) : os_(os) {}
  template <class T>
  void put(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void put_size(std::size_t n) { put<std::uint64_t>(n); }
  void bytes(const std::string& s) {
    put_size(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ofstream& os_;
};

class Reader {
 public:
  Reader(std::ifstream& is, std::string path) : is_(is), path_(std::move(path)) {}
  template <class T>
  T get() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is_) fail("truncated file");
    return v;
  }
  std::size_t get_size(std::size_t limit = std::size_t{1} << 32) {
    const auto n = get<std::uint64_t>();
    if (n > limit) fail("implausible size " + std::to_string(n));
    return static_cast<std::size_t>(n);
  }
  std::string bytes() {
    std::string s(get_size(), '\0');
    is_.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!is_) fail("truncated metadata");
    return s;
  }
  [[noreturn]] void fail(const std::string& what) { throw CheckpointError(path_ + ": " + what); }

 private:
  std::ifstream& is_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PerceptionModel& model, const std::string& metadata) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot write " + path.string());
  Writer w(os);
  const auto& c = model.config();
  os.write("NSLM", 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(c.mode == ModelMode::facts ? 0 : 1);
  w.put_size(c.slots);
  w.put_size(c.features);
  w.put_size(c.hidden.size());
  for (auto h : c.hidden) w.put_size(h);
  w.put_size(c.fact_count);
  for (std::size_t s = 0; s < c.heads.size(); ++s) {
    w.put_size(c.heads[s].size());
    for (const auto& h : c.heads[s]) {
      w.put<std::uint8_t>(h.kind == OutputHead::Kind::softmax ? 0 : 1);
      w.put_size(h.facts.size());
      for (auto f : h.facts) w.put<std::uint32_t>(f);
    }
  }
  w.put_size(c.head_hidden.size());
  for (auto h : c.head_hidden) w.put_size(h);
  w.put_size(c.classes);
  w.put_size(model.layers().size());
  for (const auto& l : model.layers()) {
    w.put_size(static_cast<std::size_t>(l.weight.rows()));
    w.put_size(static_cast<std::size_t>(l.weight.cols()));
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) w.put<double>(l.weight(i, j));
    for (auto b : l.bias) w.put<double>(b);
  }
  w.bytes(metadata);
  if (!os) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path.string());
  Reader r(is, path.string());
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "NSLM", 4) != 0) r.fail("not a model checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));

  ModelConfig c;
  const auto mode = r.get<std::uint32_t>();
  if (mode > 1) r.fail("unknown model mode");
  c.mode = mode == 0 ? ModelMode::facts : ModelMode::classifier;
  c.slots = r.get_size(1 << 20);
  c.features = r.get_size();
  c.hidden.resize(r.get_size(1 << 10));
  for (auto& h : c.hidden) h = r.get_size();
  c.fact_count = r.get_size();
  if (c.mode == ModelMode::facts) {
    c.heads.resize(c.slots);
    for (auto& slot : c.heads) {
      slot.resize(r.get_size(1 << 20));
      for (auto& h : slot) {
        const auto kind = r.get<std::uint8_t>();
        if (kind > 1) r.fail("unknown head kind");
        h.kind = kind == 0 ? OutputHead::Kind::softmax : OutputHead::Kind::sigmoid;
        h.facts.resize(r.get_size(1 << 26));
        for (auto& f : h.facts) f = r.get<std::uint32_t>();
      }
    }
  }
  c.head_hidden.resize(r.get_size(1 << 10));
  for (auto& h : c.head_hidden) h = r.get_size();
  c.classes = r.get_size();

  std::vector<Dense> layers(r.get_size(1 << 10));
  for (auto& l : layers) {
    const auto rows = static_cast<Eigen::Index>(r.get_size(1 << 24));
    const auto cols = static_cast<Eigen::Index>(r.get_size(1 << 24));
    l.weight.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) l.weight(i, j) = r.get<double>();
    l.bias.resize(rows);
    for (auto& b : l.bias) b = r.get<double>();
  }
  std::string meta = r.bytes();
  try {
    return {PerceptionModel(std::move(c), std::move(layers)), std::move(meta)};
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("inconsistent model: ") + e.what());
  }
}

}  // namespace nsl
