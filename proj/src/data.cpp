#include "reachsense/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace reachsense {

Vec Dataset::d_hat() const {
  if (size() == 0) throw std::logic_error("d_hat of empty dataset");
  return X.rowwise().maxCoeff() - X.rowwise().minCoeff();
}

Dataset load_iris(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open iris csv: " + path);
  Dataset d;
  d.name = "iris";
  std::vector<Vec> rows;
  std::map<std::string, int> label_ids;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r')
      cells.back().pop_back();
    if (lineno == 1 && !cells.empty()) {
      // tolerate a header row
      char* end = nullptr;
      std::strtod(cells[0].c_str(), &end);
      if (end == cells[0].c_str()) continue;
    }
    if (cells.size() != 5)
      throw std::runtime_error("iris csv line " + std::to_string(lineno) + ": expected 5 fields, got " +
                               std::to_string(cells.size()));
    Vec x(4);
    for (int i = 0; i < 4; ++i) {
      char* end = nullptr;
      x(i) = std::strtod(cells[(size_t)i].c_str(), &end);
      if (end == cells[(size_t)i].c_str() || *end != '\0')
        throw std::runtime_error("iris csv line " + std::to_string(lineno) + ": bad number '" +
                                 cells[(size_t)i] + "'");
    }
    const std::string& lab = cells[4];
    int id;
    char* end = nullptr;
    long asint = std::strtol(lab.c_str(), &end, 10);
    if (end != lab.c_str() && *end == '\0') {
      id = (int)asint;
      if (id < 0) throw std::runtime_error("iris csv line " + std::to_string(lineno) + ": negative label");
      label_ids.emplace(lab, id);
    } else {
      auto it = label_ids.find(lab);
      if (it == label_ids.end()) it = label_ids.emplace(lab, (int)label_ids.size()).first;
      id = it->second;
    }
    rows.push_back(x);
    d.y.push_back(id);
  }
  if (rows.empty()) throw std::runtime_error("iris csv is empty: " + path);
  d.X.resize(4, (long)rows.size());
  for (size_t i = 0; i < rows.size(); ++i) d.X.col((long)i) = rows[i];
  d.classes = *std::max_element(d.y.begin(), d.y.end()) + 1;
  return d;
}

namespace {

uint32_t read_u32_be(std::istream& f, const std::string& path, const char* what) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(path + ": truncated while reading " + what);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void write_u32_be(std::ostream& f, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v >> 24), (unsigned char)(v >> 16), (unsigned char)(v >> 8),
                        (unsigned char)v};
  f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset load_mnist(const std::string& images_path, const std::string& labels_path) {
  std::ifstream fi(images_path, std::ios::binary);
  if (!fi) throw std::runtime_error("cannot open idx images: " + images_path);
  if (read_u32_be(fi, images_path, "magic") != 0x00000803u)
    throw std::runtime_error(images_path + ": bad idx image magic (want 0x00000803)");
  uint32_t n = read_u32_be(fi, images_path, "count");
  uint32_t rows = read_u32_be(fi, images_path, "rows");
  uint32_t cols = read_u32_be(fi, images_path, "cols");
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096)
    throw std::runtime_error(images_path + ": implausible image shape");
  size_t pix = (size_t)rows * cols;
  std::vector<unsigned char> buf(pix);
  Dataset d;
  d.name = "mnist";
  d.X.resize((long)pix, (long)n);
  for (uint32_t i = 0; i < n; ++i) {
    if (!fi.read(reinterpret_cast<char*>(buf.data()), (std::streamsize)pix))
      throw std::runtime_error(images_path + ": truncated at image " + std::to_string(i));
    for (size_t j = 0; j < pix; ++j) d.X((long)j, (long)i) = buf[j] / 255.0;
  }

  std::ifstream fl(labels_path, std::ios::binary);
  if (!fl) throw std::runtime_error("cannot open idx labels: " + labels_path);
  if (read_u32_be(fl, labels_path, "magic") != 0x00000801u)
    throw std::runtime_error(labels_path + ": bad idx label magic (want 0x00000801)");
  uint32_t nl = read_u32_be(fl, labels_path, "count");
  if (nl != n)
    throw std::runtime_error("idx image/label count mismatch: " + std::to_string(n) + " vs " +
                             std::to_string(nl));
  d.y.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    char c;
    if (!fl.get(c)) throw std::runtime_error(labels_path + ": truncated at label " + std::to_string(i));
    d.y[i] = (unsigned char)c;
  }
  d.classes = d.y.empty() ? 0 : *std::max_element(d.y.begin(), d.y.end()) + 1;
  return d;
}

void write_idx_images(const std::string& path, const std::vector<std::vector<uint8_t>>& images,
                      int rows, int cols) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  write_u32_be(f, 0x00000803u);
  write_u32_be(f, (uint32_t)images.size());
  write_u32_be(f, (uint32_t)rows);
  write_u32_be(f, (uint32_t)cols);
  for (const auto& im : images) {
    if ((int)im.size() != rows * cols) throw std::invalid_argument("write_idx_images: size mismatch");
    f.write(reinterpret_cast<const char*>(im.data()), (std::streamsize)im.size());
  }
  if (!f) throw std::runtime_error("write failure on " + path);
}

void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  write_u32_be(f, 0x00000801u);
  write_u32_be(f, (uint32_t)labels.size());
  f.write(reinterpret_cast<const char*>(labels.data()), (std::streamsize)labels.size());
  if (!f) throw std::runtime_error("write failure on " + path);
}

void generate_synthetic_mnist(const std::string& dir, int n_train, int n_test, uint64_t seed) {
  std::filesystem::create_directories(dir);
  const int R = 28, C = 28, classes = 10;
  // All classes share a strong background pattern; what separates them is a
  // pair of low-amplitude class bumps, and every sample is drawn at a random
  // +/-2 pixel shift with heavy pixel noise. The overlap keeps decision
  // margins small, so the task is learnable but not trivially robust.
  std::vector<double> bg((size_t)(R * C), 0.0);
  {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> pos(5.0, 22.0);
    for (int bump = 0; bump < 4; ++bump) {
      double cy = pos(rng), cx = pos(rng);
      for (int y = 0; y < R; ++y)
        for (int x = 0; x < C; ++x) {
          double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          bg[(size_t)(y * C + x)] += 110.0 * std::exp(-d2 / (2.0 * 3.5 * 3.5));
        }
    }
  }
  std::vector<std::vector<double>> tmpl((size_t)classes, bg);
  for (int c = 0; c < classes; ++c) {
    std::mt19937_64 rng(seed * 1315423911u + (uint64_t)c);
    std::uniform_real_distribution<double> pos(5.0, 22.0);
    for (int bump = 0; bump < 2; ++bump) {
      double cy = pos(rng), cx = pos(rng);
      for (int y = 0; y < R; ++y)
        for (int x = 0; x < C; ++x) {
          double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          tmpl[(size_t)c][(size_t)(y * C + x)] += 85.0 * std::exp(-d2 / (2.0 * 2.5 * 2.5));
        }
    }
  }
  auto emit = [&](const std::string& stem, int n, uint64_t s) {
    std::mt19937_64 rng(s);
    std::normal_distribution<double> noise(0.0, 20.0);
    std::uniform_int_distribution<int> cls(0, classes - 1);
    std::uniform_int_distribution<int> shift(-1, 1);
    std::vector<std::vector<uint8_t>> images;
    std::vector<uint8_t> labels;
    images.reserve((size_t)n);
    for (int i = 0; i < n; ++i) {
      int c = cls(rng);
      int dy = shift(rng), dx = shift(rng);
      std::vector<uint8_t> im((size_t)(R * C));
      for (int y = 0; y < R; ++y)
        for (int x = 0; x < C; ++x) {
          int sy = y - dy, sx = x - dx;
          double t = (sy >= 0 && sy < R && sx >= 0 && sx < C)
                         ? tmpl[(size_t)c][(size_t)(sy * C + sx)]
                         : 0.0;
          double v = t + noise(rng);
          im[(size_t)(y * C + x)] = (uint8_t)std::clamp((int)std::lround(v), 0, 255);
        }
      images.push_back(std::move(im));
      labels.push_back((uint8_t)c);
    }
    write_idx_images(dir + "/" + stem + "-images-idx3-ubyte", images, R, C);
    write_idx_labels(dir + "/" + stem + "-labels-idx1-ubyte", labels);
  };
  emit("train", n_train, seed * 2654435761u + 1);
  emit("t10k", n_test, seed * 2654435761u + 2);
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& d, double test_frac, uint64_t seed) {
  if (test_frac < 0.0 || test_frac >= 1.0) throw std::invalid_argument("bad test fraction");
  std::vector<int> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  int n_test = (int)std::lround(test_frac * d.size());
  std::vector<int> test(idx.begin(), idx.begin() + n_test);
  std::vector<int> train(idx.begin() + n_test, idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {subset(d, train), subset(d, test)};
}

Dataset subset(const Dataset& d, const std::vector<int>& idx) {
  Dataset out;
  out.name = d.name;
  out.classes = d.classes;
  out.X.resize(d.X.rows(), (long)idx.size());
  out.y.resize(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    int j = idx[i];
    if (j < 0 || j >= d.size()) throw std::out_of_range("subset index");
    out.X.col((long)i) = d.X.col(j);
    out.y[i] = d.y[(size_t)j];
  }
  return out;
}

Batch take_batch(const Dataset& d, const std::vector<int>& idx) {
  Dataset s = subset(d, idx);
  return Batch{std::move(s.X), std::move(s.y)};
}

std::vector<std::vector<int>> batch_indices(int count, int batch_size, uint64_t seed, int epoch) {
  if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  std::vector<int> idx((size_t)count);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * (uint64_t)(epoch + 1)));
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<int>> out;
  for (int start = 0; start < count; start += batch_size) {
    int end = std::min(count, start + batch_size);
    out.emplace_back(idx.begin() + start, idx.begin() + end);
  }
  return out;
}

}  // namespace reachsense
