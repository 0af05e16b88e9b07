#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dufold/denoiser.hpp"
#include "dufold/sampler.hpp"
#include "dufold/schedule.hpp"
#include "dufold/training.hpp"

namespace dufold {

/// Validated configuration document: flat dotted keys, strict parsing
/// (unknown keys rejected), every key defaulted and documented in
/// `default_config_text()`. The fingerprint is a stable FNV-1a hash of the
/// canonicalized effective document.
struct Config {
    std::uint64_t seed = 0;

    NoiseSchedule schedule;
    Preconditioner precond;
    DenoiserConfig denoiser;
    TrainConfig train;
    SamplerConfig sampler;

    struct DataCfg {
        std::string kind = "shapes";
        std::size_t size = 64;
        int count = 272;
        std::string path;
    } data;

    struct EvalCfg {
        double sigma_y = 0.05;
        int count = 16;
    } eval;

    std::map<std::string, std::string> effective;  // canonical key -> value text
    std::string canonical_text;
    std::uint64_t fingerprint = 0;
};

Config parse_config(const std::string& text);
Config load_config_file(const std::string& path);

/// All keys with their defaults, one per line, suitable as a starting file.
std::string default_config_text();

std::uint64_t fnv1a64(const std::string& text);

}  // namespace dufold
