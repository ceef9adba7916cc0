#pragma once

#include <torch/torch.h>

#include <utility>
#include <vector>

#include "rmtppad/similarity.hpp"

namespace rmtppad {

/// Backpropagates each task loss separately through the shared parameters, in
/// the given parameter order. Uses autograd::grad, so parameter .grad fields
/// and values are left untouched. Parameters a loss does not reach contribute
/// zeros.
std::vector<GradRecord> record_task_gradients(const std::vector<torch::Tensor>& shared_params,
                                              const std::vector<std::pair<Task, torch::Tensor>>& task_losses,
                                              int64_t step);

}  // namespace rmtppad
