#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace fcre {

// Token table with a fixed reserved block. Special tokens sit at ids 0-5,
// [UNK] right after them, then the literal scaffold words used by the
// autoregressive template. Content tokens start at kReservedCount.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kMask = 3;
  static constexpr int kE1 = 4;
  static constexpr int kE2 = 5;
  static constexpr int kUnk = 6;
  static constexpr int kThe = 7;
  static constexpr int kRelation = 8;
  static constexpr int kBetween = 9;
  static constexpr int kAnd = 10;
  static constexpr int kIs = 11;
  static constexpr int kReservedCount = 12;

  Vocab();

  // Returns the existing id when the token is already present.
  int add(const std::string& token);
  // Id lookup; -1 when absent.
  int find(const std::string& token) const;
  int id_or_unk(const std::string& token) const;
  const std::string& token(int id) const;

  std::size_t size() const { return tokens_.size(); }
  bool is_content(int id) const { return id >= kReservedCount; }
  std::vector<int> content_ids() const;

  // FNV-1a over all tokens in id order; used to bind checkpoints to the
  // vocabulary they were trained with.
  std::uint64_t hash() const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace fcre
