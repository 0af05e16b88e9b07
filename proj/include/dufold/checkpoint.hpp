#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dufold/autodiff.hpp"
#include "dufold/tensor.hpp"
#include "dufold/training.hpp"

namespace dufold {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// Versioned container: magic "DUCK", version u16, little-endian named-tensor
/// table, config fingerprint, step, optional optimizer state and EMA, and a
/// trailing CRC32 over the whole preceding byte stream.
struct CheckpointData {
    std::uint64_t config_fingerprint = 0;
    std::uint64_t step = 0;
    std::vector<NamedTensor> params;
    std::vector<NamedTensor> optimizer;  // empty = absent
    std::vector<NamedTensor> ema;        // empty = absent

    const Tensor* find(const std::vector<NamedTensor>& table, const std::string& name) const;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

/// Capture the current parameters (plus optimizer/EMA state when given).
CheckpointData snapshot_training(std::uint64_t config_fingerprint,
                                 const std::vector<ad::Param*>& params,
                                 const TrainState* state = nullptr);

/// Copy checkpoint tensors back into params by name; prefers EMA values when
/// present and requested. Missing tensors raise IntegrityError.
void restore_params(const CheckpointData& data, const std::vector<ad::Param*>& params,
                    bool prefer_ema);

/// Restore optimizer moments and rng position for exact training resume.
void restore_training(const CheckpointData& data, const std::vector<ad::Param*>& params,
                      TrainState& state);

}  // namespace dufold
