#pragma once

#include <string>

#include "edcforge/ism.hpp"

namespace edcforge {

// "RIR1" magic, u32 sample rate, float32 little-endian samples.
void save_rir(const Rir& rir, const std::string& path);
Rir load_rir(const std::string& path);

// Mono 16-bit PCM, peak-normalized for listening.
void save_rir_wav(const Rir& rir, const std::string& path);

} // namespace edcforge
