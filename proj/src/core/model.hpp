#pragma once

#include <functional>
#include <string>

#include "core/blocking.hpp"
#include "core/cs_ops.hpp"

namespace fscs {

// Reconstruction variants: `fsoinet` supplements measurement information in
// feature space each phase, `oinet` does the gradient step in pixel space and
// re-lifts, `vnet` skips information supplementation and only denoises.
enum class Variant { fsoinet, oinet, vnet };

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

template <typename T>
struct Conv2dParams {
    Tensor<T> w;
    Tensor<T> b;  // empty when bias-free
    bool has_bias() const { return !b.empty(); }
};

template <typename T>
struct ResBlockParams {
    Conv2dParams<T> conv1, conv2;  // both 3x3, extent preserving
};

template <typename T>
struct FsimParams {
    Conv2dParams<T> feat_to_pixel;  // C -> 1, 3x3, no bias
    Conv2dParams<T> pixel_to_feat;  // 1 -> C, 3x3, no bias
    ResBlockParams<T> grad_res;     // C channels, bias-free
    Tensor<T> rho;                  // learnable step, shape {1}
};

template <typename T>
struct DdmParams {
    ResBlockParams<T> res_hi;  // C channels
    Conv2dParams<T> down;      // C -> 2C, 3x3, stride 2
    ResBlockParams<T> res_lo;  // 2C channels
    Conv2dParams<T> up;        // transposed, 2C -> C, kernel 2, stride 2, no bias
    Conv2dParams<T> fuse;      // C -> C, 3x3
};

template <typename T>
struct PhaseParams {
    FsimParams<T> fsim;  // convs empty for oinet, everything empty for vnet
    DdmParams<T> ddm;
};

struct ModelDesc {
    double ratio = 0.1;
    int64_t block_side = 32;
    int64_t channels = 16;  // C
    int64_t phases = 16;    // N_k
    Variant variant = Variant::fsoinet;
};

template <typename T>
struct Model {
    SamplingMatrix<T> sampling;
    Conv2dParams<T> lift;  // 1 -> C
    std::vector<PhaseParams<T>> phases;
    Conv2dParams<T> head;  // C -> 1
    int64_t channels = 0;
    Variant variant = Variant::fsoinet;

    ModelDesc desc() const {
        return {sampling.ratio, sampling.block_side, channels,
                static_cast<int64_t>(phases.size()), variant};
    }
};

// Fresh model: phi Gaussian (variance 1/N), convs fan-in-scaled uniform,
// rho = 1, and the residual-path output convs (ResBlock conv2, DDM fuse, head)
// zero-initialized so that X_rec == X_init at initialization.
template <typename T>
Model<T> make_model(const ModelDesc& desc, uint64_t seed);

// Visits every learnable tensor with its checkpoint name, in a fixed order.
template <typename T>
void for_each_param(Model<T>& m,
                    const std::function<void(const std::string&, Tensor<T>&)>& fn);
template <typename T>
void for_each_param(const Model<T>& m,
                    const std::function<void(const std::string&, const Tensor<T>&)>& fn);

template <typename T>
int64_t param_count(const Model<T>& m);

// Fills every parameter (including the normally zero-initialized ones) with
// random values; used by gradient checks that need full coverage.
template <typename T>
void randomize_parameters(Model<T>& m, uint64_t seed, double scale = 0.2);

template <typename T>
Model<T> model_cast(const Model<float>& m);

// --- graph construction ---

template <typename T>
struct Conv2dVars {
    Var w, b;
    bool has_bias = false;
};

template <typename T>
struct ResBlockVars {
    Conv2dVars<T> conv1, conv2;
};

template <typename T>
struct FsimVars {
    Conv2dVars<T> feat_to_pixel, pixel_to_feat;
    ResBlockVars<T> grad_res;
    Var rho;
};

template <typename T>
struct DdmVars {
    ResBlockVars<T> res_hi;
    Conv2dVars<T> down;
    ResBlockVars<T> res_lo;
    Conv2dVars<T> up, fuse;
};

template <typename T>
struct PhaseVars {
    FsimVars<T> fsim;
    DdmVars<T> ddm;
};

template <typename T>
struct ModelVars {
    SamplingVars<T> sampling;
    Conv2dVars<T> lift, head;
    std::vector<PhaseVars<T>> phases;
    std::vector<Var> flat;  // leaf per parameter, same order as for_each_param
    Variant variant = Variant::fsoinet;
};

template <typename T>
ModelVars<T> bind_model(Tape<T>& t, const Model<T>& m, bool requires_grad);

// F + conv2(relu(conv1(F)))
template <typename T>
Var res_block(Tape<T>& t, Var f, const ResBlockVars<T>& p);

// F - rho * ResBlock(pixel_to_feat(phi^T(phi feat_to_pixel(F) - y)))
template <typename T>
Var fsim(Tape<T>& t, Var f, Var y, const SamplingVars<T>& s, const FsimVars<T>& p);

// F + fuse((hi(F) - F) + (up(lo(down(F))) - F)); extent preserving, even extents only
template <typename T>
Var ddm(Tape<T>& t, Var f, const DdmVars<T>& p);

template <typename T>
struct ForwardVars {
    Var y, x_init, x_rec;
};

// X: [1,1,H,W] with extents divisible by the block side (caller pads).
template <typename T>
ForwardVars<T> model_forward(Tape<T>& t, const ModelVars<T>& mv, Var x);

// --- inference conveniences (no gradients) ---

template <typename T>
struct ForwardValues {
    Tensor<T> y, x_init, x_rec;
};

template <typename T>
ForwardValues<T> forward_eval(const Model<T>& m, const Tensor<T>& x);

template <typename T>
struct Reconstruction {
    Tensor<T> rec;   // [H,W]
    Tensor<T> init;  // [H,W]
};

// Pads an arbitrary (H,W) image, runs the model, crops back.
template <typename T>
Reconstruction<T> reconstruct_image(const Model<T>& m, const Tensor<T>& gray);

}  // namespace fscs
