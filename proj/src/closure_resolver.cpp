#include "blockforge/closure_resolver.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_map>

#include "blockforge/error.hpp"
#include "blockforge/import_graph.hpp"
#include "blockforge/python/parser.hpp"

namespace blockforge {
namespace py = python;

std::string_view to_string(Confidence c) {
  switch (c) {
    case Confidence::DirectImport: return "DirectImport";
    case Confidence::QualifiedName: return "QualifiedName";
    case Confidence::HeuristicMatch: return "HeuristicMatch";
  }
  return "?";
}

std::string_view to_string(TargetKind k) {
  switch (k) {
    case TargetKind::Symbol: return "Symbol";
    case TargetKind::Import: return "Import";
    case TargetKind::Builtin: return "Builtin";
  }
  return "?";
}

std::vector<FreeName> free_names(const SymbolRecord& symbol, const IndexView& view) {
  std::string_view text = view.slice(symbol);
  py::NodePtr mod;
  try {
    mod = py::parse_module(text);
  } catch (const std::exception&) {
    return {};
  }
  std::vector<FreeName> out;
  for (const auto& stmt : mod->kids) {
    for (FreeName& n : py::free_names(*stmt)) {
      n.use_site += symbol.span.start;
      out.push_back(std::move(n));
    }
  }
  return out;
}

namespace {

const SymbolRecord* qualified_symbol(const IndexView& view, const std::string& repo, const std::string& full,
                                     const ResolveOptions& opt) {
  auto mod = internal_prefix(view, repo, full);
  if (!mod || *mod == full) return nullptr;
  std::string rest = full.substr(mod->size() + 1);
  if (rest.find('.') != std::string::npos) return nullptr;
  ModuleBinding b = lookup_binding(view, repo, *mod, rest, BindOptions{opt.strip_type_checking});
  return b.kind == ModuleBinding::Kind::Symbol ? b.symbol : nullptr;
}

}  // namespace

std::variant<Resolution, Unresolved> resolve(const FreeName& name, const SymbolRecord& context, const IndexView& view,
                                             const ResolveOptions& options) {
  Resolution r;
  r.name = name;
  r.repo = context.repo_name;
  r.module = context.module;
  auto unresolved = [&](std::string reason) {
    return Unresolved{name, context.repo_name, context.module, std::move(reason), {}, nullptr};
  };
  const std::string& id = name.identifier;
  ModuleBinding b =
      lookup_binding(view, context.repo_name, context.module, id, BindOptions{options.strip_type_checking});
  switch (b.kind) {
    case ModuleBinding::Kind::Symbol:
      r.target = TargetKind::Symbol;
      r.symbol = b.symbol;
      r.import = b.via;
      r.confidence = b.via ? Confidence::DirectImport : Confidence::QualifiedName;
      if (b.symbol->name != id) r.bound_as = b.symbol->name;
      return r;
    case ModuleBinding::Kind::ExternalImport:
      r.target = TargetKind::Import;
      r.import = b.origin;
      r.confidence = Confidence::DirectImport;
      if (b.bound_as != id) r.bound_as = b.bound_as;
      return r;
    case ModuleBinding::Kind::InternalModule:
      r.target = TargetKind::Import;
      r.import = b.origin;
      r.confidence = Confidence::DirectImport;
      r.module_object = true;
      if (b.bound_as != id) r.bound_as = b.bound_as;
      if (name.in_header && name.dotted.size() > id.size()) {
        std::string full = b.dotted + name.dotted.substr(id.size());
        if (const SymbolRecord* s = qualified_symbol(view, context.repo_name, full, options)) {
          r.target = TargetKind::Symbol;
          r.symbol = s;
          r.confidence = Confidence::QualifiedName;
          r.bound_as.clear();
        }
      }
      return r;
    case ModuleBinding::Kind::UnresolvedImport: {
      Unresolved u = unresolved(b.message);
      u.preserve = b.via;
      return u;
    }
    case ModuleBinding::Kind::ExternalStar:
    case ModuleBinding::Kind::None:
      break;
  }
  if (py::is_builtin(id)) {
    r.target = TargetKind::Builtin;
    r.confidence = Confidence::QualifiedName;
    return r;
  }
  if (b.kind == ModuleBinding::Kind::ExternalStar) {
    r.target = TargetKind::Import;
    r.import = b.origin;
    r.confidence = Confidence::HeuristicMatch;
    return r;
  }
  std::vector<const SymbolRecord*> same_repo, other;
  for (std::size_t i : view.by_name(id)) {
    const SymbolRecord& s = view.symbols()[i];
    if (s.repo_name == context.repo_name && s.fq_name == context.fq_name) continue;
    (s.repo_name == context.repo_name ? same_repo : other).push_back(&s);
  }
  const auto& pool = same_repo.empty() ? other : same_repo;
  if (pool.size() == 1) {
    r.target = TargetKind::Symbol;
    r.symbol = pool.front();
    r.confidence = Confidence::HeuristicMatch;
    return r;
  }
  if (pool.empty()) return unresolved("no binding, builtin or corpus definition");
  Unresolved u = unresolved("AmbiguousHeuristic: " + std::to_string(pool.size()) + " equally ranked definitions");
  for (const auto* s : pool) u.candidates.push_back(s->repo_name + ":" + s->fq_name);
  std::sort(u.candidates.begin(), u.candidates.end());
  return u;
}

std::vector<std::vector<std::size_t>> strongly_connected(const std::vector<std::vector<std::size_t>>& deps) {
  const std::size_t n = deps.size();
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, kUnset), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> out;
  std::size_t counter = 0;
  struct Frame {
    std::size_t v;
    std::size_t next;
  };
  for (std::size_t start = 0; start < n; ++start) {
    if (index[start] != kUnset) continue;
    std::vector<Frame> call{{start, 0}};
    index[start] = low[start] = counter++;
    stack.push_back(start);
    on_stack[start] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      if (f.next < deps[f.v].size()) {
        std::size_t w = deps[f.v][f.next++];
        if (index[w] == kUnset) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      std::size_t v = f.v;
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] == index[v]) {
        std::vector<std::size_t> comp;
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
      }
    }
  }
  return out;
}

std::vector<SymbolRecord> ClosureResult::internal_defs() const {
  std::vector<SymbolRecord> out;
  for (const auto& m : members)
    if (m.symbol.kind == SymbolKind::Class || m.symbol.kind == SymbolKind::Function) out.push_back(m.symbol);
  return out;
}

std::vector<SymbolRecord> ClosureResult::constants() const {
  std::vector<SymbolRecord> out;
  for (const auto& m : members)
    if (m.symbol.kind == SymbolKind::Constant || m.symbol.kind == SymbolKind::Alias) out.push_back(m.symbol);
  return out;
}

std::vector<std::string> ClosureResult::scc_member_names() const {
  std::vector<std::string> out;
  for (const auto& g : scc_groups)
    for (auto i : g) out.push_back(members[i].symbol.name);
  return out;
}

ClosureResult close(const BlockCandidate& root, const IndexView& view, const ResolveOptions& options) {
  const SymbolRecord* root_sym = view.symbol(root.repo_name, root.fq_name);
  if (!root_sym) throw Error(ErrorCode::BlockNotFound, root.repo_name + ":" + root.fq_name + " is not indexed");
  ClosureResult out;
  out.root = root;
  std::unordered_map<std::string, std::size_t> member_of;
  std::unordered_map<std::string, std::size_t> import_of;

  auto add_member = [&](const SymbolRecord& s) {
    auto [it, fresh] = member_of.emplace(s.repo_name + '\x1f' + s.fq_name, out.members.size());
    if (fresh) out.members.push_back(ClosureMember{s, false, std::string(view.slice(s)), {}});
    return it->second;
  };
  auto add_alias = [&](const SymbolRecord& context, const ImportRecord* imp, const std::string& alias,
                       const std::string& target, std::optional<std::size_t> target_member) {
    std::string text = alias + " = " + target;
    auto [it, fresh] = member_of.emplace("alias\x1f" + text, out.members.size());
    if (fresh) {
      SymbolRecord s;
      s.name = alias;
      s.fq_name = context.module.empty() ? alias : context.module + "." + alias;
      s.kind = SymbolKind::Alias;
      s.repo_name = context.repo_name;
      s.rel_path = context.rel_path;
      s.module = context.module;
      s.file_sha1 = context.file_sha1;
      s.span = imp ? imp->span : context.span;
      s.value_text = target;
      ClosureMember m{s, true, text, {}};
      if (target_member) m.deps.push_back(*target_member);
      out.members.push_back(std::move(m));
    }
    return it->second;
  };
  auto preserve = [&](const ImportRecord& imp) {
    if (import_of.emplace(imp.emit_text(), out.preserved_imports.size()).second) out.preserved_imports.push_back(imp);
  };
  auto depend = [&](std::size_t from, std::size_t to) {
    auto& d = out.members[from].deps;
    if (from != to && std::find(d.begin(), d.end(), to) == d.end()) d.push_back(to);
  };

  add_member(*root_sym);
  for (std::size_t i = 0; i < out.members.size(); ++i) {
    if (out.members[i].synthetic_alias) continue;
    const SymbolRecord sym = out.members[i].symbol;  // copy: members may reallocate
    for (const ImportRecord* imp : view.module_imports(sym.repo_name, sym.module))
      if (imp->is_future()) preserve(*imp);
    for (const FreeName& n : free_names(sym, view)) {
      auto res = resolve(n, sym, view, options);
      if (auto* u = std::get_if<Unresolved>(&res)) {
        if (u->preserve) preserve(*u->preserve);
        out.unresolved.push_back(std::move(*u));
        continue;
      }
      Resolution& r = std::get<Resolution>(res);
      switch (r.target) {
        case TargetKind::Symbol: {
          std::size_t t = add_member(*r.symbol);
          if (r.module_object && r.import) preserve(*r.import);
          if (!r.bound_as.empty()) {
            std::size_t a = add_alias(sym, r.import, n.identifier, r.bound_as, t);
            depend(i, a);
          } else {
            depend(i, t);
          }
          break;
        }
        case TargetKind::Import:
          preserve(*r.import);
          if (!r.bound_as.empty()) depend(i, add_alias(sym, r.import, n.identifier, r.bound_as, std::nullopt));
          break;
        case TargetKind::Builtin:
          break;
      }
      out.resolutions.push_back(std::move(r));
    }
  }

  std::vector<std::vector<std::size_t>> deps;
  for (const auto& m : out.members) deps.push_back(m.deps);
  for (auto& comp : strongly_connected(deps))
    if (comp.size() > 1) out.scc_groups.push_back(std::move(comp));
  std::sort(out.scc_groups.begin(), out.scc_groups.end());
  return out;
}

nlohmann::ordered_json closure_to_json(const ClosureResult& c) {
  using oj = nlohmann::ordered_json;
  oj members = oj::array();
  for (const auto& m : c.members) {
    oj deps = oj::array();
    for (auto d : m.deps) deps.push_back(c.members[d].symbol.fq_name);
    members.push_back({{"fq_name", m.symbol.fq_name},
                       {"kind", to_string(m.symbol.kind)},
                       {"repo", m.symbol.repo_name},
                       {"path", m.symbol.rel_path},
                       {"span", {m.symbol.span.start, m.symbol.span.end}},
                       {"synthetic_alias", m.synthetic_alias},
                       {"depends_on", deps}});
  }
  oj imports = oj::array();
  for (const auto& i : c.preserved_imports) imports.push_back(i.emit_text());
  oj resolutions = oj::array();
  for (const auto& r : c.resolutions) {
    std::string target;
    if (r.target == TargetKind::Symbol) target = r.symbol->repo_name + ":" + r.symbol->fq_name;
    if (r.target == TargetKind::Import) target = r.import->emit_text();
    if (r.target == TargetKind::Builtin) target = r.name.identifier;
    resolutions.push_back({{"identifier", r.name.identifier},
                           {"module", r.module},
                           {"use_site", r.name.use_site},
                           {"target_kind", to_string(r.target)},
                           {"target", target},
                           {"tier", to_string(r.confidence)}});
  }
  oj unresolved = oj::array();
  for (const auto& u : c.unresolved)
    unresolved.push_back({{"identifier", u.name.identifier},
                          {"module", u.module},
                          {"use_site", u.name.use_site},
                          {"reason", u.reason},
                          {"candidates", u.candidates}});
  oj sccs = oj::array();
  for (const auto& g : c.scc_groups) {
    oj group = oj::array();
    for (auto i : g) group.push_back(c.members[i].symbol.fq_name);
    sccs.push_back(group);
  }
  return oj{{"block", c.root.class_name},
            {"root", c.root.repo_name + ":" + c.root.fq_name},
            {"members", members},
            {"preserved_imports", imports},
            {"resolutions", resolutions},
            {"unresolved", unresolved},
            {"scc_groups", sccs}};
}

void write_closure_report(const ClosureResult& closure, const std::filesystem::path& reports_dir) {
  std::filesystem::create_directories(reports_dir);
  auto p = reports_dir / (closure.root.class_name + ".closure.json");
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  out << closure_to_json(closure).dump(2) << '\n';
}

}  // namespace blockforge
