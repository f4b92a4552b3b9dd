#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ocmusic {

/// Deterministic greedy LZSS with fixed parameters (8 KiB window, matches of
/// 4..258 bytes, byte-aligned token stream). Output is bit-identical across
/// platforms, which is what the redundancy feature needs from its compressor.
std::vector<std::uint8_t> lzss_compress(std::span<const std::uint8_t> input);

std::vector<std::uint8_t> lzss_decompress(std::span<const std::uint8_t> compressed);

std::size_t lzss_compressed_size(std::span<const std::uint8_t> input);

}  // namespace ocmusic
