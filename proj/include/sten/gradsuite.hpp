#pragma once

// Finite-difference validation of the full model: every trainable parameter
// is checked through the joint loss on a small built-in instance.

#include "sten/eval.hpp"

#include <string>
#include <utility>
#include <vector>

namespace sten {

struct ToyInstance {
    Dataset dataset;
    SocialGraph graph;
    MetaPathIndex index;
};

// 4 users / 6 items / 8-event sequences with a small social graph.
ToyInstance make_toy_instance();

// One entry per parameter-owning module: max relative error of analytic vs
// central-difference gradients of the joint loss at the given eps.
std::vector<std::pair<std::string, double>> run_grad_suite(const ModelConfig& cfg,
                                                           double eps);

} // namespace sten
