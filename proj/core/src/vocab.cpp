#include "fcre/vocab.hpp"

#include "fcre/errors.hpp"

namespace fcre {

Vocab::Vocab() {
  static const char* kReserved[kReservedCount] = {"[PAD]", "[CLS]", "[SEP]",  "[MASK]",
                                                  "[E1]",  "[E2]",  "[UNK]",  "the",
                                                  "relation", "between", "and", "is"};
  for (int i = 0; i < kReservedCount; ++i) add(kReserved[i]);
}

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocab::find(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? -1 : it->second;
}

int Vocab::id_or_unk(const std::string& token) const {
  const int id = find(token);
  return id < 0 ? kUnk : id;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= static_cast<int>(tokens_.size())) {
    throw IndexError("Vocab::token: id out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::content_ids() const {
  std::vector<int> out;
  for (int id = kReservedCount; id < static_cast<int>(tokens_.size()); ++id) out.push_back(id);
  return out;
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix_byte = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001B3ULL;
  };
  for (const std::string& t : tokens_) {
    for (char c : t) mix_byte(static_cast<unsigned char>(c));
    mix_byte(0);
  }
  return h;
}

}  // namespace fcre
