// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tore/model.hpp"

namespace tore {

/// Image [height × width × channels] with pixels in [0, 1].
struct Sample {
  Tensor image;
  int label = 0;
};

struct Dataset {
  std::vector<Sample> train, val, test;
};

// ---------------------------------------------------------------------------
// Portable pixmaps (binary P5 / P6)

struct Pixmap {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 -> P5, 3 -> P6
  std::vector<std::uint8_t> bytes;
};

Pixmap parse_pnm(std::string_view data);
std::string format_pnm(const Pixmap& img);
Pixmap read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Pixmap& img);

/// Byte <-> [0,1] conversion; write rounds to the nearest level and clamps.
Tensor pixmap_to_tensor(const Pixmap& img, int channels_out);
Pixmap tensor_to_pixmap(const Tensor& image);

/// Reads a P5/P6 file as [H × W × channels]; grayscale is replicated when
/// `channels` is 3.
Tensor read_image(const std::filesystem::path& path, int channels = 3);
void write_image(const std::filesystem::path& path, const Tensor& image);

// ---------------------------------------------------------------------------
// Datasets

/// `root/labels.csv` (header `filename,label`) plus the listed images, in CSV order.
std::vector<Sample> load_dataset(const std::filesystem::path& root, int num_classes, int channels = 3);

/// Writes `root/labels.csv` and one P6 file per sample.
void save_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples);

struct SyntheticSpec {
  int num_classes = 10;
  int height = 32;
  int width = 32;
  int channels = 3;
  int train = 3000;
  int val = 300;
  int test = 1000;
};

enum class SplitName : std::uint64_t { train = 1, val = 2, test = 3 };

/// One sample; a pure function of (spec, seed, split, index). Class = index % num_classes.
Sample synthetic_sample(const SyntheticSpec& spec, std::uint64_t seed, SplitName split, int index);
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Short name of a synthetic class.
const char* synthetic_class_name(int label);

// ---------------------------------------------------------------------------
// Checkpoints

std::string checkpoint_bytes(const Model& model);
/// Throws LoadError with the byte offset of the problem.
Model checkpoint_from_bytes(std::string_view bytes);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

}  // namespace tore
