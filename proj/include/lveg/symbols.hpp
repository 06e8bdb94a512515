#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lveg {

// Dense, stable string <-> id mapping.
class Interner {
 public:
  int intern(std::string_view name);
  // -1 when absent.
  int find(std::string_view name) const;
  const std::string& name(int id) const;
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

// Nonterminal and terminal namespaces are separate interners.
struct SymbolTable {
  Interner nonterminals;
  Interner terminals;
  int start_id = -1;

  const std::string& nonterminal(int id) const { return nonterminals.name(id); }
  const std::string& terminal(int id) const { return terminals.name(id); }
  bool is_intermediate(int nonterminal_id) const {
    const auto& n = nonterminals.name(nonterminal_id);
    return !n.empty() && n.front() == '@';
  }
};

}  // namespace lveg
