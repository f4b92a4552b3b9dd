#include "ocmusic/lzss.hpp"

#include <array>
#include <cstring>

#include "ocmusic/errors.hpp"

namespace ocmusic {

namespace {

constexpr std::size_t kWindow = 8192;
constexpr std::size_t kMinMatch = 4;
constexpr std::size_t kMaxMatch = 259;
constexpr int kMaxChain = 64;
constexpr std::size_t kHashBits = 16;

std::uint32_t hash4(const std::uint8_t* p) {
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    return (v * 2654435761u) >> (32 - kHashBits);
}

}  // namespace

std::vector<std::uint8_t> lzss_compress(std::span<const std::uint8_t> input) {
    std::vector<std::uint8_t> out;
    const std::size_t n = input.size();
    out.reserve(n / 2 + 16);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i) & 0xff));

    std::vector<std::int64_t> head(std::size_t{1} << kHashBits, -1);
    std::vector<std::int64_t> prev(n, -1);

    std::size_t pos = 0;
    std::size_t flag_at = 0;
    int flag_bit = 8;
    auto begin_token = [&](bool is_match) {
        if (flag_bit == 8) {
            flag_at = out.size();
            out.push_back(0);
            flag_bit = 0;
        }
        if (is_match) out[flag_at] |= static_cast<std::uint8_t>(1u << flag_bit);
        ++flag_bit;
    };
    auto insert_pos = [&](std::size_t p) {
        if (p + 4 > n) return;
        const std::uint32_t h = hash4(input.data() + p);
        prev[p] = head[h];
        head[h] = static_cast<std::int64_t>(p);
    };

    while (pos < n) {
        std::size_t best_len = 0, best_offset = 0;
        if (pos + kMinMatch <= n) {
            std::int64_t cand = head[hash4(input.data() + pos)];
            int chain = 0;
            while (cand >= 0 && chain++ < kMaxChain) {
                const auto c = static_cast<std::size_t>(cand);
                if (pos - c > kWindow) break;
                std::size_t len = 0;
                const std::size_t limit = std::min(kMaxMatch, n - pos);
                while (len < limit && input[c + len] == input[pos + len]) ++len;
                if (len >= kMinMatch && len > best_len) {
                    best_len = len;
                    best_offset = pos - c;
                    if (len == limit) break;
                }
                cand = prev[c];
            }
        }
        if (best_len >= kMinMatch) {
            begin_token(true);
            out.push_back(static_cast<std::uint8_t>(best_offset & 0xff));
            out.push_back(static_cast<std::uint8_t>(best_offset >> 8 & 0xff));
            out.push_back(static_cast<std::uint8_t>(best_len - kMinMatch));
            for (std::size_t i = 0; i < best_len; ++i) insert_pos(pos + i);
            pos += best_len;
        } else {
            begin_token(false);
            out.push_back(input[pos]);
            insert_pos(pos);
            ++pos;
        }
    }
    return out;
}

std::vector<std::uint8_t> lzss_decompress(std::span<const std::uint8_t> compressed) {
    if (compressed.size() < 4) throw DecodeError("lzss: missing header");
    std::size_t n = 0;
    for (int i = 0; i < 4; ++i) n |= static_cast<std::size_t>(compressed[i]) << (8 * i);

    std::vector<std::uint8_t> out;
    out.reserve(n);
    std::size_t pos = 4;
    std::uint8_t flags = 0;
    int flag_bit = 8;
    while (out.size() < n) {
        if (flag_bit == 8) {
            if (pos >= compressed.size()) throw DecodeError("lzss: truncated stream");
            flags = compressed[pos++];
            flag_bit = 0;
        }
        const bool is_match = flags >> flag_bit & 1;
        ++flag_bit;
        if (is_match) {
            if (pos + 3 > compressed.size()) throw DecodeError("lzss: truncated match");
            const std::size_t offset = compressed[pos] | compressed[pos + 1] << 8;
            const std::size_t len = kMinMatch + compressed[pos + 2];
            pos += 3;
            if (offset == 0 || offset > out.size()) throw DecodeError("lzss: bad offset");
            for (std::size_t i = 0; i < len; ++i) out.push_back(out[out.size() - offset]);
        } else {
            if (pos >= compressed.size()) throw DecodeError("lzss: truncated literal");
            out.push_back(compressed[pos++]);
        }
    }
    return out;
}

std::size_t lzss_compressed_size(std::span<const std::uint8_t> input) {
    return lzss_compress(input).size();
}

}  // namespace ocmusic
