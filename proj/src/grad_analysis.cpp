#include "rmtppad/grad_analysis.hpp"

#include <algorithm>
#include <cmath>

namespace rmtppad {

std::vector<GradRecord> record_task_gradients(const std::vector<torch::Tensor>& shared_params,
                                              const std::vector<std::pair<Task, torch::Tensor>>& task_losses,
                                              int64_t step) {
  std::vector<GradRecord> out;
  for (size_t t = 0; t < task_losses.size(); ++t) {
    const auto& [task, loss] = task_losses[t];
    auto grads = torch::autograd::grad({loss}, shared_params, /*grad_outputs=*/{}, /*retain_graph=*/true,
                                       /*create_graph=*/false, /*allow_unused=*/true);
    GradRecord rec;
    rec.step = step;
    rec.task = task;
    for (size_t i = 0; i < shared_params.size(); ++i) {
      auto g = grads[i].defined() ? grads[i] : torch::zeros_like(shared_params[i]);
      auto flat = g.detach().to(torch::kFloat64).contiguous().view(-1);
      const auto* p = flat.data_ptr<double>();
      rec.vector.insert(rec.vector.end(), p, p + flat.numel());
    }
    rec.valid = std::all_of(rec.vector.begin(), rec.vector.end(), [](double v) { return std::isfinite(v); });
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace rmtppad
