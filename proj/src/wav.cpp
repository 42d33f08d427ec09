#include "lgse/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

namespace lgse {

namespace {

std::uint32_t le32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("cannot open " + path.string());
  const std::vector<std::uint8_t> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0)
    throw WavError(where + "not a RIFF/WAVE file");

  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t size = le32(&b[pos + 4]);
    const std::size_t body = pos + 8;
    if (size > b.size() - body) throw WavError(where + "truncated chunk");
    if (std::memcmp(&b[pos], "fmt ", 4) == 0) {
      if (size < 16) throw WavError(where + "short fmt chunk");
      const auto format = le16(&b[body]);
      const auto channels = le16(&b[body + 2]);
      const auto rate = le32(&b[body + 4]);
      const auto bits = le16(&b[body + 14]);
      if (format != 1) throw WavError(where + "unsupported format tag " + std::to_string(format) + " (PCM only)");
      if (channels != 1) throw WavError(where + std::to_string(channels) + " channels (mono only)");
      if (rate != kSampleRate) throw WavError(where + "sample rate " + std::to_string(rate) + " (16000 only)");
      if (bits != 16) throw WavError(where + std::to_string(bits) + "-bit samples (16-bit only)");
      have_fmt = true;
    } else if (std::memcmp(&b[pos], "data", 4) == 0) {
      data = &b[body];
      data_len = size;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw WavError(where + "missing fmt chunk");
  if (!data) throw WavError(where + "missing data chunk");

  Waveform w;
  w.samples.resize(static_cast<Eigen::Index>(data_len / 2));
  for (Eigen::Index i = 0; i < w.samples.size(); ++i)
    w.samples(i) = static_cast<std::int16_t>(le16(data + 2 * i)) / 32768.0;
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (w.sample_rate != kSampleRate) throw WavError("write_wav: sample rate must be 16000");
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + 2 * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, kSampleRate);
  put32(out, kSampleRate * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, 2 * n);
  for (Eigen::Index i = 0; i < w.samples.size(); ++i) {
    const double x = std::clamp(w.samples(i), -1.0, 1.0);
    const long q = std::clamp(std::lround(x * 32768.0), -32768L, 32767L);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw WavError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw WavError("write failed for " + path.string());
}

void save_corpus(const std::filesystem::path& dir, const std::vector<CorpusPair>& corpus, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv", std::ios::trunc);
  if (!manifest) throw WavError("cannot write " + (dir / "manifest.csv").string());
  manifest << "id,clean,noise,duration_s,seed,color\n";
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "%04zu", i);
    const std::string clean = std::string("clean_") + id + ".wav";
    const std::string noise = std::string("noise_") + id + ".wav";
    write_wav(dir / clean, corpus[i].clean);
    write_wav(dir / noise, corpus[i].noise);
    manifest << id << ',' << clean << ',' << noise << ',' << corpus[i].clean.duration_s() << ',' << seed << ','
             << (corpus[i].color == NoiseColor::Pink ? "pink" : "white") << '\n';
  }
  if (!manifest) throw WavError("write failed for manifest.csv");
}

std::vector<CorpusPair> load_corpus(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) throw WavError("no corpus manifest in " + dir.string());
  std::string line;
  std::getline(manifest, line);
  if (line.rfind("id,clean,noise", 0) != 0) throw WavError(dir.string() + ": malformed manifest header");
  std::vector<CorpusPair> out;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw WavError(dir.string() + ": malformed manifest row '" + line + "'");
    CorpusPair p;
    p.clean = read_wav(dir / f[1]);
    p.noise = read_wav(dir / f[2]);
    p.color = f[5] == "pink" ? NoiseColor::Pink : NoiseColor::White;
    out.push_back(std::move(p));
  }
  if (out.empty()) throw WavError(dir.string() + ": empty corpus");
  return out;
}

}  // namespace lgse
