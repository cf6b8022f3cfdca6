#pragma once

#include "crossseg/cnn_unet.hpp"
#include "crossseg/swin_unet.hpp"

namespace crossseg {

template <typename T>
std::unique_ptr<Network<T>> build_network(const NetworkConfig& cfg) {
  cfg.validate();
  if (cfg.kind == NetworkKind::kCnnUnet) return std::make_unique<CnnUnet<T>>(cfg);
  return std::make_unique<SwinUnet<T>>(cfg);
}

}  // namespace crossseg
