#include "rbmtree/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace rbmtree {

namespace {

constexpr char kMagic[8] = {'R', 'B', 'M', 'T', 'R', 'E', 'E', '1'};

void put_u32(std::ostream &os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i)
    b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char *>(b), 4);
}

void put_u64(std::ostream &os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char *>(b), 8);
}

std::uint32_t get_u32(std::istream &is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char *>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream &is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char *>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

} // namespace

void CheckpointSeries::validate() const {
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    if (k > 0 && checkpoints[k].age <= checkpoints[k - 1].age)
      throw std::runtime_error("CheckpointSeries: ages not strictly increasing");
    if (!checkpoints[k].model.same_shape(checkpoints.front().model))
      throw std::runtime_error("CheckpointSeries: model shape mismatch");
  }
}

void save_checkpoint(const std::filesystem::path &path, const PottsRBM &model,
                     std::uint64_t age) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os)
      throw std::runtime_error("save_checkpoint: cannot open " + tmp.string());
    os.write(kMagic, 8);
    put_u32(os, static_cast<std::uint32_t>(model.n_visible()));
    put_u32(os, static_cast<std::uint32_t>(model.n_states()));
    put_u32(os, static_cast<std::uint32_t>(model.n_hidden()));
    put_u64(os, age);
    char g = static_cast<char>(model.gauge());
    os.write(&g, 1);

    const int nv = model.n_visible(), nq = model.n_states(),
              nh = model.n_hidden();
    std::vector<double> buf;
    buf.reserve(nv * nq);
    for (int i = 0; i < nv; ++i)
      for (int q = 0; q < nq; ++q)
        buf.push_back(model.visible_fields()(i, q));
    os.write(reinterpret_cast<const char *>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(double)));
    os.write(reinterpret_cast<const char *>(model.hidden_fields().data()),
             static_cast<std::streamsize>(nh * sizeof(double)));
    buf.clear();
    buf.reserve(static_cast<std::size_t>(nv) * nh * nq);
    for (int i = 0; i < nv; ++i)
      for (int mu = 0; mu < nh; ++mu)
        for (int q = 0; q < nq; ++q)
          buf.push_back(model.weight(i, mu, q));
    os.write(reinterpret_cast<const char *>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(double)));
    if (!os)
      throw std::runtime_error("save_checkpoint: write failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  const int nv = static_cast<int>(get_u32(is));
  const int nq = static_cast<int>(get_u32(is));
  const int nh = static_cast<int>(get_u32(is));
  const std::uint64_t age = get_u64(is);
  char g;
  is.read(&g, 1);
  if (g < 0 || g > 2)
    throw std::runtime_error("load_checkpoint: bad gauge byte");

  Checkpoint ckpt;
  ckpt.age = age;
  ckpt.model = PottsRBM(nv, nq, nh, static_cast<Gauge>(g));
  std::vector<double> buf(static_cast<std::size_t>(nv) * nq);
  is.read(reinterpret_cast<char *>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(double)));
  for (int i = 0; i < nv; ++i)
    for (int q = 0; q < nq; ++q)
      ckpt.model.visible_fields()(i, q) = buf[i * nq + q];
  is.read(reinterpret_cast<char *>(ckpt.model.hidden_fields().data()),
          static_cast<std::streamsize>(nh * sizeof(double)));
  buf.resize(static_cast<std::size_t>(nv) * nh * nq);
  is.read(reinterpret_cast<char *>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(double)));
  if (!is)
    throw std::runtime_error("load_checkpoint: truncated file " + path.string());
  std::size_t k = 0;
  for (int i = 0; i < nv; ++i)
    for (int mu = 0; mu < nh; ++mu)
      for (int q = 0; q < nq; ++q)
        ckpt.model.weight(i, mu, q) = buf[k++];
  return ckpt;
}

void write_file_atomic(const std::filesystem::path &path,
                       const std::string &contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os)
      throw std::runtime_error("write_file_atomic: cannot open " + tmp.string());
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os)
      throw std::runtime_error("write_file_atomic: write failed");
  }
  std::filesystem::rename(tmp, path);
}

void save_series_manifest(const std::filesystem::path &dir,
                          const std::vector<std::uint64_t> &ages,
                          const nlohmann::json &training_config) {
  nlohmann::json j;
  j["version"] = 1;
  j["ages"] = ages;
  j["training_config"] = training_config;
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

CheckpointSeries load_series(const std::filesystem::path &dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is)
    throw std::runtime_error("load_series: missing manifest.json in " +
                             dir.string());
  nlohmann::json j;
  is >> j;
  CheckpointSeries series;
  series.training_config = j.value("training_config", nlohmann::json::object());
  for (std::uint64_t age : j.at("ages").get<std::vector<std::uint64_t>>()) {
    std::filesystem::path p = dir / ("ckpt_" + std::to_string(age) + ".rbm");
    Checkpoint c = load_checkpoint(p);
    if (c.age != age)
      throw std::runtime_error("load_series: age mismatch in " + p.string());
    series.checkpoints.push_back(std::move(c));
  }
  series.validate();
  return series;
}

} // namespace rbmtree
