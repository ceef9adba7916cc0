#include "rmtppad/model.hpp"

#include "rmtppad/errors.hpp"

namespace rmtppad {

RmtPpadImpl::RmtPpadImpl(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.encoder.validate();
  if (!cfg_.tasks.any()) throw ConfigError("model needs at least one task");
  encoder = register_module("encoder", HybridEncoder(cfg_.encoder));
  const auto c = cfg_.encoder.channel_width;
  if (cfg_.use_gca) {
    const GcaConfig g{c, cfg_.gca_reduction, {cfg_.gate_lo, cfg_.gate_hi}};
    if (cfg_.tasks.detection) {
      gca_det = register_module("gca_det", torch::nn::ModuleList());
      for (int k = 0; k < 3; ++k) gca_det->push_back(Gca(g));
    }
    if (cfg_.tasks.segmentation()) {
      gca_seg = register_module("gca_seg", torch::nn::ModuleList());
      for (int k = 0; k < 3; ++k) gca_seg->push_back(Gca(g));
    }
  }
  if (cfg_.tasks.detection) {
    auto det = cfg_.det;
    det.hidden_dim = c;
    det_decoder = register_module("det_decoder", DetDecoder(det));
  }
  if (cfg_.tasks.segmentation())
    seg_decoder = register_module("seg_decoder", SegDecoder(SegDecoderConfig{c, cfg_.seg_width}));
}

FeaturePyramid RmtPpadImpl::apply_gca(torch::nn::ModuleList& gcas, const FeaturePyramid& shared) {
  if (!gcas) return shared;
  return {gcas[0]->as<Gca>()->forward(shared.s3), gcas[1]->as<Gca>()->forward(shared.s4),
          gcas[2]->as<Gca>()->forward(shared.s5)};
}

FeaturePyramid RmtPpadImpl::detection_features(const FeaturePyramid& shared) { return apply_gca(gca_det, shared); }

FeaturePyramid RmtPpadImpl::segmentation_features(const FeaturePyramid& shared) {
  return apply_gca(gca_seg, shared);
}

ModelOutput RmtPpadImpl::forward(const torch::Tensor& images, const DenoisingQueries* denoising) {
  ModelOutput out;
  out.shared = encoder->forward(images);
  if (det_decoder) out.detection = det_decoder->forward(detection_features(out.shared), denoising);
  if (seg_decoder) out.segmentation = seg_decoder->forward(segmentation_features(out.shared));
  return out;
}

std::vector<torch::Tensor> RmtPpadImpl::shared_parameters() const { return encoder->parameters(); }

bool is_gca_parameter(const std::string& name) {
  return name.rfind("gca_det.", 0) == 0 || name.rfind("gca_seg.", 0) == 0;
}

}  // namespace rmtppad
