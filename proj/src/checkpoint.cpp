#include "lgse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lgse/config.hpp"

namespace lgse {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'L', 'G', 'S', 'E'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  template <class T>
  T get() {
    T v;
    read(&v, sizeof(T));
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void read(void* dst, std::size_t n) {
    if (n > in_.size() - pos_) throw CheckpointError("checkpoint: truncated at byte " + std::to_string(pos_));
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint Checkpoint::capture(const EnhancementModel& m, const Adam* opt, const Rng* rng) {
  Checkpoint c;
  c.model = m.config();
  for (const Parameter* p : m.parameters()) c.tensors.push_back({p->name, p->value});
  if (opt) {
    c.step = static_cast<std::uint64_t>(opt->steps());
    for (const Parameter* p : m.parameters()) {
      auto it = opt->moments().find(p->name);
      if (it == opt->moments().end()) continue;
      c.tensors.push_back({"adam.m." + p->name, it->second.m});
      c.tensors.push_back({"adam.v." + p->name, it->second.v});
    }
  }
  if (rng) c.rng_state = rng->state();
  return c;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put(kCheckpointVersion);
  w.put_string(model_config_json(model).dump());
  w.put(step);
  w.put_string(rng_state);
  w.put(static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    w.put_string(t.name);
    w.put(std::uint32_t{2});
    w.put(static_cast<std::uint64_t>(t.value.rows()));
    w.put(static_cast<std::uint64_t>(t.value.cols()));
    w.put_bytes(t.value.data(), sizeof(double) * static_cast<std::size_t>(t.value.size()));
  }
  return w.take();
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint c;
  try {
    c.model = model_config_from_json(nlohmann::json::parse(r.get_string()));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad model configuration: ") + e.what());
  }
  c.step = r.get<std::uint64_t>();
  c.rng_state = r.get_string();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.get_string();
    const auto ndim = r.get<std::uint32_t>();
    if (ndim != 2) throw CheckpointError("checkpoint: tensor " + t.name + " has rank " + std::to_string(ndim));
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows > (1u << 24) || cols > (1u << 24)) throw CheckpointError("checkpoint: tensor " + t.name + " too large");
    t.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    r.read(t.value.data(), sizeof(double) * rows * cols);
    c.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const NamedTensor& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

EnhancementModel Checkpoint::restore_model() const {
  EnhancementModel m(model, 0);
  for (Parameter* p : m.parameters()) {
    const NamedTensor* t = find(p->name);
    if (!t) throw CheckpointError("checkpoint: missing tensor " + p->name);
    if (t->value.rows() != p->value.rows() || t->value.cols() != p->value.cols())
      throw CheckpointError("checkpoint: tensor " + p->name + " has shape " + shape_str(t->value) + ", expected " +
                            shape_str(p->value));
    p->value = t->value;
  }
  for (const NamedTensor& t : tensors) {
    if (t.name.rfind("adam.", 0) == 0) continue;
    bool known = false;
    for (const Parameter* p : m.parameters()) known = known || p->name == t.name;
    if (!known) throw CheckpointError("checkpoint: unexpected tensor " + t.name);
  }
  return m;
}

void Checkpoint::restore_optimizer(Adam& opt) const {
  opt.moments().clear();
  for (const NamedTensor& t : tensors) {
    if (t.name.rfind("adam.m.", 0) != 0) continue;
    const std::string name = t.name.substr(7);
    const NamedTensor* v = find("adam.v." + name);
    if (!v) throw CheckpointError("checkpoint: missing second moment for " + name);
    opt.moments()[name] = Adam::Moments{t.value, v->value};
  }
  opt.set_steps(static_cast<long>(step));
}

void Checkpoint::restore_rng(Rng& rng) const {
  if (rng_state.empty()) throw CheckpointError("checkpoint: no RNG state stored");
  rng.set_state(rng_state);
}

}  // namespace lgse
