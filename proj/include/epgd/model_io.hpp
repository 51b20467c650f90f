#pragma once

#include <filesystem>
#include <string>

#include "epgd/tensornet.hpp"

namespace epgd {

// Model file layout:
//   "EPGDNET1\n"
//   "input_side <d>\n"
//   "layers <n>\n"
//   one line per layer: "conv <kernel> <in> <out>" | "relu" | "maxpool <size>" | "dense <in> <out>"
//   "params <count>\n"
//   <count> little-endian IEEE-754 binary64 values: for every conv/dense layer in
//   declaration order, the weight matrix in column-major order followed by the bias.
inline constexpr const char* kModelMagic = "EPGDNET1";

std::string encode_network(const Network& net);
Network decode_network(const std::string& bytes);

void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace epgd
