#pragma once

#include <string>

#include "slsdrop/synthesis.hpp"

namespace slsdrop {

// Human-inspectable JSON representation.  Doubles survive a round trip
// bit-for-bit.
void save_bank_text(const ControllerBank& bank, const std::string& path);
ControllerBank load_bank_text(const std::string& path);

// Compact little-endian binary representation with a magic header and an
// explicit version; unknown magics or versions are rejected.
void save_bank_binary(const ControllerBank& bank, const std::string& path);
ControllerBank load_bank_binary(const std::string& path);

// Dispatch by extension (".json" -> text, otherwise binary) / by sniffing
// the leading bytes.
void save_bank(const ControllerBank& bank, const std::string& path);
ControllerBank load_bank(const std::string& path);

}  // namespace slsdrop
