#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "lssltc/losses.hpp"
#include "lssltc/network.hpp"
#include "lssltc/synth.hpp"
#include "lssltc/train.hpp"

namespace lssltc {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Everything a run needs. Serialized as INI-style sections:
/// [network] [lss] [loss] [synth] [train], one `key = value` per line.
struct RunConfig {
    NetworkConfig network;
    SynthConfig synth;
    TrainConfig train;

    void validate() const;
    std::string to_text() const;

    /// Starts from defaults and applies every key present in `text`.
    /// Unknown sections or keys and unparsable values raise ConfigError.
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
};

}  // namespace lssltc
