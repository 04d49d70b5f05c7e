#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace cgrl {

// Dense token id table. Ids are assigned in construction order:
// specials, then (optionally) yes/no, then question tokens, then the
// slot domains in declaration order. Special ids are pairwise distinct.
struct Vocab {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> id_of;

  int bos = -1;
  int sep = -1;
  int qend = -1;
  int answer = -1;
  int eos = -1;
  // Probe extension; -1 when the vocab was built without probe support.
  int probe = -1;
  int yes = -1;
  int no = -1;

  int size() const { return static_cast<int>(tokens.size()); }
  bool has_probe_tokens() const { return probe >= 0; }

  int add(const std::string& text);
  int id(const std::string& text) const;  // throws ConfigError on unknown token
  const std::string& text(int id) const;
  bool contains(const std::string& text) const {
    return id_of.find(text) != id_of.end();
  }
};

}  // namespace cgrl
