#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace t2ic {

constexpr int kVocabSize = 40;
constexpr int kPadToken = 0;
constexpr int kStartToken = 1;
constexpr int kMaxCaptionLen = 12;
constexpr int kCaptionsPerImage = 5;

const std::vector<std::string>& vocab();

// Id of a known word; throws naming the word otherwise.
int token_id(const std::string& word);

// Whitespace tokenization against the fixed vocabulary.
std::vector<std::uint16_t> tokenize(const std::string& text);

std::string detokenize(const std::vector<std::uint16_t>& tokens);

}  // namespace t2ic
