#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "jssu/gradcheck.hpp"

namespace jssu {

struct NamedCheckResult {
    std::string name;
    GradCheckReport report;  // worst instance
    int instances = 0;
};

struct NamedCheck {
    std::string name;
    std::string description;
    std::function<NamedCheckResult(std::uint64_t seed, double tol)> run;
};

/// Primitive and fidelity-gradient checks in 64-bit: elementwise, activations, conv2d,
/// conv_transpose2d, bicubic, softmax, linear, cluster_routing, roll, patch_image,
/// channel_attention, topk_attention, l1_loss, sr, ssr, fusion.
const std::vector<NamedCheck>& gradcheck_suite();

/// ½‖down_sr(u) - f‖² against the adjoint-configured up_sr direction on random 6x6 instances.
NamedCheckResult check_sr_fidelity(std::uint64_t seed, double tol, int instances = 5);
/// ½‖down_ssr(u) - f‖² against the backward pass on random 6x6 instances.
NamedCheckResult check_ssr_fidelity(std::uint64_t seed, double tol, int instances = 5);
/// ½‖u ū_SR - ū_SSR û_SR‖² against fusion_gradient on random 6x6 instances.
NamedCheckResult check_fusion_fidelity(std::uint64_t seed, double tol, int instances = 5);

}  // namespace jssu
