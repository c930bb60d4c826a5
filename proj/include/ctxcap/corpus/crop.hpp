#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace ctxcap::corpus {

enum class CropMode { news, script };

struct CropResult {
  std::vector<std::string> tokens;
  std::size_t first_sentence = 0;  // kept sentence range [first, last)
  std::size_t last_sentence = 0;
  bool truncated = false;  // a single sentence exceeded the budget and was cut
};

// Sentence-wise cropping to at most max_tokens. News mode drops sentences
// from the end. Script mode drops from whichever end lies farther from
// `center` (default: the middle sentence), the front on ties, so the centre
// sentence survives. A lone sentence over budget is cut to max_tokens (news:
// its head; script: its middle) and `truncated` is set.
inline CropResult crop_context(const std::vector<std::vector<std::string>>& sentences, std::size_t max_tokens,
                               CropMode mode, std::optional<std::size_t> center = std::nullopt) {
  CropResult r;
  if (sentences.empty() || max_tokens == 0) return r;
  std::size_t lo = 0, hi = sentences.size();
  std::size_t total = 0;
  for (const auto& s : sentences) total += s.size();
  const std::size_t c = std::min(center.value_or((sentences.size() - 1) / 2), sentences.size() - 1);
  while (total > max_tokens && hi - lo > 1) {
    bool drop_back;
    if (mode == CropMode::news) {
      drop_back = true;
    } else {
      const std::size_t front = c - lo, back = hi - 1 - c;
      drop_back = back > front;
    }
    if (drop_back) total -= sentences[--hi].size();
    else total -= sentences[lo++].size();
  }
  r.first_sentence = lo;
  r.last_sentence = hi;
  for (std::size_t i = lo; i < hi; ++i) r.tokens.insert(r.tokens.end(), sentences[i].begin(), sentences[i].end());
  if (r.tokens.size() > max_tokens) {
    r.truncated = true;
    const std::size_t skip = mode == CropMode::news ? 0 : (r.tokens.size() - max_tokens) / 2;
    r.tokens = std::vector<std::string>(r.tokens.begin() + static_cast<std::ptrdiff_t>(skip),
                                        r.tokens.begin() + static_cast<std::ptrdiff_t>(skip + max_tokens));
  }
  return r;
}

}  // namespace ctxcap::corpus
