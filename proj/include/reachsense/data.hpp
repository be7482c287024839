#pragma once

// Datasets and deterministic batching. Iris comes from CSV, MNIST-format
// data from IDX files; perturbations are expressed as a fraction of the
// per-dimension data range d_hat, so both datasets share one epsilon story.

#include <cstdint>
#include <string>
#include <vector>

#include "reachsense/grads.hpp"

namespace reachsense {

struct Dataset {
  Mat X;               // features as columns, dim x count
  std::vector<int> y;  // labels, one per column
  int classes = 0;
  std::string name;

  int dim() const { return (int)X.rows(); }
  int size() const { return (int)X.cols(); }
  Vec d_hat() const;  // per-dimension range max - min over the samples
};

// CSV rows: four numeric features then a label (species name or integer).
// Errors carry the 1-based line number.
Dataset load_iris(const std::string& path);

// IDX image/label file pair, pixel values scaled to [0, 1].
Dataset load_mnist(const std::string& images_path, const std::string& labels_path);

// IDX writers (used by the synthetic data generator and the format tests).
void write_idx_images(const std::string& path, const std::vector<std::vector<uint8_t>>& images,
                      int rows, int cols);
void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels);

// MNIST-format stand-in: 28x28 class-templated blobs plus pixel noise,
// written as train/test IDX pairs under dir.
void generate_synthetic_mnist(const std::string& dir, int n_train, int n_test, uint64_t seed);

std::pair<Dataset, Dataset> train_test_split(const Dataset& d, double test_frac, uint64_t seed);

Dataset subset(const Dataset& d, const std::vector<int>& idx);
Batch take_batch(const Dataset& d, const std::vector<int>& idx);

// Epoch batch order: a pure function of (count, batch size, seed, epoch),
// so different training methods see identical sample sequences.
std::vector<std::vector<int>> batch_indices(int count, int batch_size, uint64_t seed, int epoch);

}  // namespace reachsense
