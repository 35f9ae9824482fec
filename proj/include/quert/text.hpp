#pragma once

// Whitespace vocabulary and tokenizer plus gazetteer longest-match geo-phrase
// detection. Specials occupy fixed ids 0-4.

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "quert/corpus.hpp"

namespace quert {

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kMask = 3;
  static constexpr int kUnk = 4;
  static constexpr int kNumSpecials = 5;

  Vocab() {
    for (const char* s : {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"}) add_token(s);
  }

  int add_token(const std::string& tok) {
    auto it = token_to_id_.find(tok);
    if (it != token_to_id_.end()) return it->second;
    int id = static_cast<int>(id_to_token_.size());
    token_to_id_[tok] = id;
    id_to_token_.push_back(tok);
    return id;
  }

  int id(const std::string& tok) const {
    auto it = token_to_id_.find(tok);
    return it == token_to_id_.end() ? kUnk : it->second;
  }
  const std::string& token(int id) const { return id_to_token_.at(id); }
  std::size_t size() const { return id_to_token_.size(); }
  bool is_special(int id) const { return id < kNumSpecials; }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocab file: " + path);
    for (const auto& t : id_to_token_) out << t << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocab file: " + path);
    Vocab v;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      if (lineno < kNumSpecials) {
        if (line != v.id_to_token_[lineno])
          throw std::runtime_error("vocab file: special token mismatch at line " +
                                   std::to_string(lineno));
      } else {
        v.add_token(line);
      }
      ++lineno;
    }
    return v;
  }

 private:
  std::map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

inline std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> toks;
  std::istringstream is(text);
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

// Tokens occurring in any query or title, ordered by frequency descending then
// lexicographically, after the five specials.
inline Vocab build_vocab(const std::vector<QueryClickPair>& corpus) {
  std::map<std::string, long long> freq;
  for (const auto& p : corpus) {
    for (const auto& t : split_tokens(p.query)) ++freq[t];
    for (const auto& t : split_tokens(p.item_title)) ++freq[t];
  }
  std::vector<std::pair<std::string, long long>> order(freq.begin(), freq.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (const auto& [tok, _] : order) v.add_token(tok);
  return v;
}

struct TokenizedText {
  std::vector<std::string> tokens;
  std::vector<int> ids;
  std::vector<std::pair<int, int>> geo_spans;  // inclusive [start, end]
  std::vector<PhraseSpan> phrase_spans;
};

inline TokenizedText tokenize(const std::string& text, const Vocab& vocab) {
  TokenizedText out;
  out.tokens = split_tokens(text);
  out.ids.reserve(out.tokens.size());
  for (const auto& t : out.tokens) out.ids.push_back(vocab.id(t));
  return out;
}

inline std::string detokenize(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

// Greedy longest match, left to right; whole-token aligned.
inline std::vector<std::pair<int, int>> detect_geo_phrases(const std::vector<std::string>& tokens,
                                                           const Gazetteer& gaz) {
  // Index gazetteer names by first token.
  std::map<std::string, std::vector<std::vector<std::string>>> by_first;
  for (const auto& e : gaz.entries()) {
    auto toks = e.name_tokens();
    if (!toks.empty()) by_first[toks[0]].push_back(std::move(toks));
  }
  std::vector<std::pair<int, int>> spans;
  std::size_t i = 0;
  while (i < tokens.size()) {
    auto it = by_first.find(tokens[i]);
    std::size_t best_len = 0;
    if (it != by_first.end()) {
      for (const auto& name : it->second) {
        if (name.size() <= best_len || i + name.size() > tokens.size()) continue;
        bool match = true;
        for (std::size_t k = 1; k < name.size(); ++k)
          if (tokens[i + k] != name[k]) {
            match = false;
            break;
          }
        if (match) best_len = name.size();
      }
    }
    if (best_len > 0) {
      spans.emplace_back(static_cast<int>(i), static_cast<int>(i + best_len - 1));
      i += best_len;
    } else {
      ++i;
    }
  }
  return spans;
}

}  // namespace quert
