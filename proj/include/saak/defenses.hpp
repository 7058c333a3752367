#ifndef SAAK_DEFENSES_HPP
#define SAAK_DEFENSES_HPP

#include <string>

#include "saak/tensor.hpp"

namespace saak::defenses {

enum class Method { None, Jpeg, BitDepth, Median, NlMeans, Tvm, Deflect };

struct DefenseSpec {
    Method method = Method::None;
    // jpeg
    int quality = 90;
    // bitdepth
    int bits = 4;
    // median
    int window = 3;
    // nlmeans
    double h = 0.1;
    int patch = 3;
    int search = 7;
    // tvm
    double lambda = 0.1;
    int iters = 100;
    // deflect
    int count = 200;
    int deflect_window = 5;
    unsigned seed = 7;

    void validate() const;
};

/// Parses CLI strings like "jpeg:q=90", "median:w=3",
/// "tvm:lambda=0.1,iters=100", "deflect:count=200,window=5,seed=7".
DefenseSpec parse_defense(const std::string& text);
std::string defense_name(const DefenseSpec& spec);

ImageTensor bit_depth_reduce(const ImageTensor& x, int bits);
ImageTensor median_filter(const ImageTensor& x, int window);
ImageTensor nl_means(const ImageTensor& x, double h, int patch, int search);
ImageTensor tvm(const ImageTensor& x, double lambda, int iters);
ImageTensor pixel_deflect(const ImageTensor& x, int count, int window, unsigned seed);

/// DCT-quantization roundtrip with the standard luminance table; entropy
/// coding is omitted since it is lossless.
ImageTensor jpeg_approx(const ImageTensor& x, int quality);

/// Smoothed isotropic total variation of an image, summed over channels.
double total_variation(const ImageTensor& x);

ImageTensor apply_defense(const ImageTensor& x, const DefenseSpec& spec);
LabeledSet apply_defense(const LabeledSet& set, const DefenseSpec& spec);

}  // namespace saak::defenses

#endif  // SAAK_DEFENSES_HPP
