#ifndef SAAK_DATASETS_HPP
#define SAAK_DATASETS_HPP

#include <string>
#include <utility>
#include <vector>

#include "saak/tensor.hpp"

namespace saak::datasets {

/// Reads an IDX image/label file pair (big-endian headers, u8 payloads).
/// Pixels are scaled by 1/255 into [0,1].
LabeledSet load_idx(const std::string& image_path, const std::string& label_path);

/// Writes a LabeledSet as an IDX image/label pair, quantizing pixels to u8.
void save_idx(const LabeledSet& set, const std::string& image_path,
              const std::string& label_path);

/// Reads CIFAR-10 binary batches (3073-byte records, label byte first,
/// channel-planar R,G,B pixels) into interleaved (h,w,c) layout.
LabeledSet load_cifar10(const std::vector<std::string>& batch_paths);

/// Deterministic synthetic set: each class is a distinct spatial intensity
/// pattern plus uniform noise of amplitude 0.1, clipped to [0,1]. Classes
/// are linearly separable in raw pixel space.
LabeledSet synth_blobs(int n_per_class, int num_classes, int side, unsigned seed);

/// Stratified split: ceil(fraction * N_c) of each class goes to the first
/// half. Deterministic for a fixed seed; the halves partition the input.
std::pair<LabeledSet, LabeledSet> split(const LabeledSet& set, double train_fraction,
                                        unsigned seed);

/// Symmetric zero-padding of every image to target_side x target_side.
LabeledSet pad_images(const LabeledSet& set, int target_side);

}  // namespace saak::datasets

#endif  // SAAK_DATASETS_HPP
