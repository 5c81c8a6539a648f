#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pixelbytes/tokenizer.hpp"

namespace pixelbytes {

// Deterministic synthetic multimodal records: a templated lower-case
// description, a two-frame 8x8 sprite (outlined blob, idle animation) and a
// short mono tone. Each record
// encodes to roughly 240 tokens.
std::vector<Record> synthetic_records(std::size_t count, std::uint64_t seed);

}  // namespace pixelbytes
