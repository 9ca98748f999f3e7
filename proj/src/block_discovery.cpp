#include "blockforge/block_discovery.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <regex>
#include <unordered_map>
#include <unordered_set>

#include "blockforge/error.hpp"
#include "blockforge/import_graph.hpp"
#include "blockforge/python/parser.hpp"

namespace blockforge {
namespace py = python;
namespace {

bool is_module_path(const std::string& dotted) {
  return dotted == "torch.nn.Module" || dotted == "torch.nn.modules.module.Module";
}

std::string last_component(std::string_view text) {
  auto paren = text.find('(');
  if (paren != std::string_view::npos) text = text.substr(0, paren);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  auto dot = text.rfind('.');
  return std::string(dot == std::string_view::npos ? text : text.substr(dot + 1));
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct Target {
  enum Kind { Module, Class, Dynamic, Other } kind = Other;
  const SymbolRecord* cls = nullptr;
};

struct ClassInfo {
  bool done = false;
  bool module = false;
  bool dynamic = false;
  std::vector<std::string> chain;
  std::vector<const SymbolRecord*> internal_bases;  // resolved corpus bases, in declaration order
};

class Classes {
 public:
  explicit Classes(const IndexView& view) : view_(view) {}

  const ClassInfo& info(const SymbolRecord& cls) {
    auto [it, fresh] = infos_.try_emplace(&cls);
    if (!fresh) return it->second;  // finished, or on the current path (inheritance cycle)
    ClassInfo result;
    for (const std::string& base : cls.bases) {
      std::string dotted;
      try {
        dotted = py::dotted_name(*py::parse_expression(base));
      } catch (const std::exception&) {
      }
      if (dotted.empty()) {
        result.dynamic = true;
        continue;
      }
      Target t = resolve(cls.repo_name, cls.module, dotted, 0);
      if (t.kind == Target::Dynamic) result.dynamic = true;
      if (t.kind == Target::Class) {
        result.internal_bases.push_back(t.cls);
        const ClassInfo& up = info(*t.cls);
        if (up.dynamic && !up.module) result.dynamic = true;
        if (up.module && !result.module) {
          result.module = true;
          result.chain.push_back(t.cls->fq_name);
          result.chain.insert(result.chain.end(), up.chain.begin(), up.chain.end());
        }
      } else if (t.kind == Target::Module && !result.module) {
        result.module = true;
        result.chain = {"torch.nn.Module"};
      }
    }
    result.done = true;
    auto& slot = infos_[&cls];
    slot = std::move(result);
    return slot;
  }

  // Parsed class statement (cached).
  const py::Node* tree(const SymbolRecord& cls) {
    auto it = trees_.find(&cls);
    if (it != trees_.end()) return it->second ? it->second->kids[0].get() : nullptr;
    py::NodePtr mod;
    try {
      mod = py::parse_module(view_.slice(cls));
    } catch (const std::exception&) {
    }
    const py::Node* stmt = mod && mod->kids.size() == 1 ? mod->kids[0].get() : nullptr;
    if (!stmt || stmt->kind != py::NodeKind::ClassDef) mod.reset();
    auto& slot = trees_[&cls];
    slot = std::move(mod);
    return slot ? slot->kids[0].get() : nullptr;
  }

  // The `forward` the class would use: its own, else the first corpus
  // ancestor's in depth-first declaration order.
  const py::Node* forward(const SymbolRecord& cls, std::unordered_set<const SymbolRecord*>& seen, bool& assigned) {
    if (!seen.insert(&cls).second) return nullptr;
    if (const py::Node* t = tree(cls)) {
      for (const auto& s : t->kid(2).kids) {
        if (s->kind == py::NodeKind::FunctionDef && s->value == "forward") return s.get();
        if (s->kind == py::NodeKind::Assign || s->kind == py::NodeKind::AnnAssign) {
          for (std::size_t i = 0; i + 1 < s->kids.size(); ++i) {
            if (s->kids[i]->kind == py::NodeKind::Name && s->kids[i]->value == "forward") {
              assigned = true;
              return s.get();
            }
          }
        }
      }
    }
    for (const SymbolRecord* b : info(cls).internal_bases)
      if (const py::Node* f = forward(*b, seen, assigned)) return f;
    return nullptr;
  }

 private:
  Target resolve(const std::string& repo, const std::string& module, const std::string& dotted, int depth) {
    if (depth > 16) return {};
    auto dot = dotted.find('.');
    std::string head = dotted.substr(0, dot);
    std::string rest = dot == std::string::npos ? "" : dotted.substr(dot + 1);
    auto join = [&](const std::string& a) { return rest.empty() ? a : a + "." + rest; };
    ModuleBinding b = lookup_binding(view_, repo, module, head);
    switch (b.kind) {
      case ModuleBinding::Kind::Symbol: {
        const SymbolRecord& s = *b.symbol;
        if (s.kind == SymbolKind::Class) return rest.empty() ? Target{Target::Class, &s} : Target{};
        if (s.kind == SymbolKind::Alias) return resolve(s.repo_name, s.module, join(s.value_text), depth + 1);
        return Target{Target::Dynamic, nullptr};  // computed base: a factory or registry lookup
      }
      case ModuleBinding::Kind::ExternalImport:
      case ModuleBinding::Kind::ExternalStar:
        return is_module_path(join(b.dotted)) ? Target{Target::Module, nullptr} : Target{};
      case ModuleBinding::Kind::InternalModule: {
        if (rest.empty()) return {};
        std::string full = b.dotted + "." + rest;
        auto mod = internal_prefix(view_, repo, full);
        if (!mod || *mod == full) return {};
        return resolve(repo, *mod, full.substr(mod->size() + 1), depth + 1);
      }
      case ModuleBinding::Kind::None:
        return dotted == "nn.Module" || dotted == "torch.nn.Module" ? Target{Target::Module, nullptr} : Target{};
      case ModuleBinding::Kind::UnresolvedImport:
        return {};
    }
    return {};
  }

  const IndexView& view_;
  std::unordered_map<const SymbolRecord*, ClassInfo> infos_;
  std::unordered_map<const SymbolRecord*, py::NodePtr> trees_;
};

bool stub_body(const py::Node& fn) {
  const auto& body = fn.kid(3).kids;
  std::size_t i = 0;
  bool doc = py::docstring_of(fn.kid(3)) != nullptr;
  if (doc) ++i;
  if (i == body.size()) return doc;
  if (body.size() - i == 1 && body[i]->kind == py::NodeKind::Raise && !body[i]->kid(0).empty()) {
    const py::Node& exc = body[i]->kid(0);
    const py::Node& callee = exc.kind == py::NodeKind::Call ? exc.kid(0) : exc;
    if (py::dotted_name(callee) == "NotImplementedError") return true;
  }
  if (!doc) return false;
  return std::all_of(body.begin() + static_cast<std::ptrdiff_t>(i), body.end(), [](const py::NodePtr& s) {
    if (s->kind == py::NodeKind::Pass) return true;
    return s->kind == py::NodeKind::ExprStmt && s->kid(0).kind == py::NodeKind::Constant &&
           static_cast<py::ConstKind>(s->kid(0).flags) == py::ConstKind::Ellipsis;
  });
}

bool abstract_with(Classes& classes, const SymbolRecord& cls) {
  for (const auto& b : cls.bases) {
    std::string last = last_component(b);
    if (ends_with(last, "ABC") || ends_with(last, "ABCMeta")) return true;
  }
  if (!cls.metaclass.empty() && ends_with(last_component(cls.metaclass), "ABCMeta")) return true;
  if (const py::Node* t = classes.tree(cls)) {
    for (const auto& s : t->kid(2).kids) {
      if (s->kind != py::NodeKind::FunctionDef) continue;
      for (const auto& d : s->kid(0).kids) {
        const py::Node& callee = d->kind == py::NodeKind::Call ? d->kid(0) : *d;
        if (last_component(py::dotted_name(callee)) == "abstractmethod") return true;
      }
    }
  }
  std::unordered_set<const SymbolRecord*> seen;
  bool assigned = false;
  const py::Node* fwd = classes.forward(cls, seen, assigned);
  return fwd && !assigned && stub_body(*fwd);
}

}  // namespace

bool matches_symbol_patterns(const std::string& class_name, const std::vector<std::string>& patterns) {
  if (patterns.empty()) return true;
  for (const auto& p : patterns) {
    bool plain = !p.empty() && std::all_of(p.begin(), p.end(), [](unsigned char c) { return std::isalnum(c) || c == '_'; });
    if (plain) {
      if (class_name.rfind(p, 0) == 0) return true;
    } else {
      try {
        if (std::regex_search(class_name, std::regex(p))) return true;
      } catch (const std::regex_error& e) {
        throw Error(ErrorCode::ConfigError, "bad symbol pattern '" + p + "': " + e.what());
      }
    }
  }
  return false;
}

bool is_abstract(const SymbolRecord& class_record, const IndexView& view) {
  Classes classes(view);
  return abstract_with(classes, class_record);
}

DiscoveryResult discover_blocks(const IndexView& view, const SymbolFilters& filters) {
  DiscoveryResult out;
  Classes classes(view);
  for (const SymbolRecord& s : view.symbols()) {
    if (s.kind != SymbolKind::Class) continue;
    auto f = filters.find(s.repo_name);
    if (f != filters.end() && !matches_symbol_patterns(s.name, f->second)) continue;
    const ClassInfo& info = classes.info(s);
    if (!info.module) {
      if (info.dynamic)
        out.diagnostics.push_back(
            DiscoveryDiagnostic{s.repo_name, s.fq_name, "base class only resolvable at runtime", true});
      continue;
    }
    BlockCandidate c;
    c.class_name = s.name;
    c.fq_name = s.fq_name;
    c.repo_name = s.repo_name;
    c.rel_path = s.rel_path;
    c.base_chain = info.chain;
    std::unordered_set<const SymbolRecord*> seen;
    bool assigned = false;
    c.has_forward = classes.forward(s, seen, assigned) != nullptr;
    c.abstract = abstract_with(classes, s);
    if (!c.has_forward) {
      out.diagnostics.push_back(DiscoveryDiagnostic{s.repo_name, s.fq_name, "no forward in class or corpus ancestors", false});
      continue;
    }
    if (c.abstract) {
      out.diagnostics.push_back(DiscoveryDiagnostic{s.repo_name, s.fq_name, "abstract", false});
      continue;
    }
    out.candidates.push_back(std::move(c));
  }
  std::sort(out.candidates.begin(), out.candidates.end(), [&](const BlockCandidate& a, const BlockCandidate& b) {
    return std::make_tuple(view.priority(a.repo_name), std::cref(a.fq_name), std::cref(a.repo_name)) <
           std::make_tuple(view.priority(b.repo_name), std::cref(b.fq_name), std::cref(b.repo_name));
  });
  return out;
}

void write_candidate_files(const std::vector<BlockCandidate>& candidates, const std::filesystem::path& dir) {
  nlohmann::json names = nlohmann::json::array();
  nlohmann::ordered_json index = nlohmann::ordered_json::object();
  for (const auto& c : candidates) {
    if (!index.contains(c.class_name)) {
      names.push_back(c.class_name);
      index[c.class_name] = nlohmann::ordered_json::array();
    }
    index[c.class_name].push_back({{"fq_name", c.fq_name}, {"repo", c.repo_name}, {"path", c.rel_path}});
  }
  if (!dir.empty()) std::filesystem::create_directories(dir);
  auto write = [&](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
    out << text << '\n';
  };
  write(dir / "nn_block_names.json", names.dump(2));
  write(dir / "nn_block_index.json", index.dump(2));
}

}  // namespace blockforge
