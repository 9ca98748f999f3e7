#include "blockforge/import_graph.hpp"

#include <algorithm>
#include <set>

namespace blockforge {
namespace {

std::vector<std::string> split_dotted(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (!s.empty()) {
    auto dot = s.find('.', pos);
    out.push_back(s.substr(pos, dot - pos));
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  return out;
}

std::string key(const std::string& repo, const std::string& module) { return repo + '\x1f' + module; }

}  // namespace

std::optional<std::string> absolute_module(const FileRecord& importer, const ImportRecord& imp) {
  if (imp.relative_level == 0) return imp.source_module;
  std::vector<std::string> package = split_dotted(importer.module);
  if (!importer.is_package && !package.empty()) package.pop_back();
  if (imp.relative_level > package.size()) return std::nullopt;
  package.resize(package.size() - (imp.relative_level - 1));
  std::string out;
  for (const auto& p : package) out += (out.empty() ? "" : ".") + p;
  if (!imp.source_module.empty()) out += (out.empty() ? "" : ".") + imp.source_module;
  return out;
}

std::optional<std::string> internal_prefix(const IndexView& view, const std::string& repo, const std::string& dotted) {
  std::string cur = dotted;
  while (!cur.empty()) {
    if (view.has_module(repo, cur)) return cur;
    auto dot = cur.rfind('.');
    if (dot == std::string::npos) break;
    cur.resize(dot);
  }
  return std::nullopt;
}

namespace {

ModuleBinding bind_in(const IndexView& view, const std::string& repo, const std::string& module, const std::string& name,
                   const BindOptions& opt, int depth);

ModuleBinding from_import(const IndexView& view, const ImportRecord& r, const std::string& imported,
                          const std::string& local, const BindOptions& opt, int depth) {
  ModuleBinding b;
  b.via = &r;
  const FileRecord* importer = view.module_file(r.repo_name, r.importer_module);
  auto abs = importer ? absolute_module(*importer, r) : std::optional<std::string>(r.source_module);
  if (!abs) {
    b.kind = ModuleBinding::Kind::UnresolvedImport;
    b.message = "relative import beyond the top-level package";
    return b;
  }
  const std::string sub = abs->empty() ? imported : *abs + "." + imported;
  if (!abs->empty() && view.has_module(r.repo_name, *abs)) {
    ModuleBinding inner = bind_in(view, r.repo_name, *abs, imported, opt, depth + 1);
    if (inner.kind != ModuleBinding::Kind::None && inner.kind != ModuleBinding::Kind::ExternalStar) {
      inner.via = &r;
      return inner;
    }
  }
  if (view.has_module(r.repo_name, sub)) {
    b.kind = ModuleBinding::Kind::InternalModule;
    b.dotted = sub;
    b.origin = &r;
    b.bound_as = local;
    return b;
  }
  if (r.relative_level > 0 || internal_prefix(view, r.repo_name, *abs)) {
    b.kind = ModuleBinding::Kind::UnresolvedImport;
    b.message = "no definition of '" + imported + "' in corpus module '" + *abs + "'";
    return b;
  }
  b.kind = ModuleBinding::Kind::ExternalImport;
  b.origin = &r;
  b.bound_as = local;
  b.dotted = sub;
  return b;
}

ModuleBinding bind_in(const IndexView& view, const std::string& repo, const std::string& module, const std::string& name,
                   const BindOptions& opt, int depth) {
  ModuleBinding none;
  if (depth > 24) return none;
  auto imports = view.module_imports(repo, module);
  for (auto it = imports.rbegin(); it != imports.rend(); ++it) {
    const ImportRecord& r = **it;
    if (opt.strip_type_checking && r.guard == ImportGuard::TypeChecking) continue;
    if (r.is_future() || r.is_star()) continue;
    for (const auto& [imported, alias] : r.bindings) {
      if (r.form == ImportForm::Plain) {
        std::string local = alias.empty() ? imported.substr(0, imported.find('.')) : alias;
        if (local != name) continue;
        std::string target = alias.empty() ? local : imported;
        ModuleBinding b;
        b.via = b.origin = &r;
        b.bound_as = local;
        b.dotted = target;
        b.kind = internal_prefix(view, repo, target) ? ModuleBinding::Kind::InternalModule
                                                     : ModuleBinding::Kind::ExternalImport;
        return b;
      }
      std::string local = alias.empty() ? imported : alias;
      if (local == name) return from_import(view, r, imported, local, opt, depth);
    }
  }
  for (const SymbolRecord* s : view.module_symbols(repo, module)) {
    if (s->name == name) {
      ModuleBinding b;
      b.kind = ModuleBinding::Kind::Symbol;
      b.symbol = s;
      b.bound_as = name;
      return b;
    }
  }
  ModuleBinding star;
  if (name.empty() || name[0] == '_') return none;
  for (const ImportRecord* r : imports) {
    if (!r->is_star() || (opt.strip_type_checking && r->guard == ImportGuard::TypeChecking)) continue;
    const FileRecord* importer = view.module_file(r->repo_name, r->importer_module);
    auto abs = importer ? absolute_module(*importer, *r) : std::nullopt;
    if (!abs) continue;
    if (view.has_module(repo, *abs)) {
      ModuleBinding inner = bind_in(view, repo, *abs, name, opt, depth + 1);
      if (inner.kind == ModuleBinding::Kind::Symbol || inner.kind == ModuleBinding::Kind::ExternalImport) {
        inner.via = r;
        return inner;
      }
    } else if (r->relative_level == 0 && star.kind == ModuleBinding::Kind::None) {
      star.kind = ModuleBinding::Kind::ExternalStar;
      star.via = star.origin = r;
      star.bound_as = name;
      star.dotted = *abs + "." + name;
    }
  }
  return star;
}

}  // namespace

ModuleBinding lookup_binding(const IndexView& view, const std::string& repo, const std::string& module,
                             const std::string& name, const BindOptions& options) {
  return bind_in(view, repo, module, name, options, 0);
}

std::optional<std::size_t> ImportGraph::find(const std::string& repo, const std::string& module) const {
  auto it = index_.find(key(repo, module));
  return it == index_.end() ? std::nullopt : std::optional<std::size_t>(it->second);
}

bool ImportGraph::has_edge(std::size_t from, std::size_t to) const {
  return std::binary_search(edges.begin(), edges.end(), ImportEdge{from, to, 0},
                            [](const ImportEdge& a, const ImportEdge& b) {
                              return std::tie(a.from, a.to) < std::tie(b.from, b.to);
                            });
}

ImportGraph build_import_graph(const IndexView& view) {
  ImportGraph g;
  auto node = [&](const std::string& repo, const std::string& module, bool external) {
    auto [it, fresh] = g.index_.emplace(key(repo, module), g.nodes.size());
    if (fresh) g.nodes.push_back(ModuleNode{repo, module, external});
    return it->second;
  };
  for (const auto& f : view.files()) node(f.repo_name, f.module, false);

  std::set<std::tuple<std::size_t, std::size_t>> seen;
  auto edge = [&](std::size_t from, std::size_t to, std::size_t imp) {
    if (from != to && seen.emplace(from, to).second) g.edges.push_back(ImportEdge{from, to, imp});
  };
  const auto& imports = view.imports();
  for (std::size_t i = 0; i < imports.size(); ++i) {
    const ImportRecord& r = imports[i];
    const FileRecord* importer = view.module_file(r.repo_name, r.importer_module);
    if (!importer) continue;
    auto from = *g.find(r.repo_name, r.importer_module);
    auto target = absolute_module(*importer, r);
    if (!target) {
      g.diagnostics.push_back(ImportDiagnostic{r.repo_name, r.importer_module, r.statement_text,
                                               "UnresolvableRelativeImport: level " +
                                                   std::to_string(r.relative_level) + " exceeds package depth"});
      continue;
    }
    if (r.form == ImportForm::FromImport) {
      bool any = false;
      if (!target->empty() && view.has_module(r.repo_name, *target)) {
        edge(from, *g.find(r.repo_name, *target), i);
        any = true;
      }
      for (const auto& [name, alias] : r.bindings) {
        std::string sub = target->empty() ? name : *target + "." + name;
        if (name != "*" && view.has_module(r.repo_name, sub)) {
          edge(from, *g.find(r.repo_name, sub), i);
          any = true;
        }
      }
      if (!any && r.relative_level == 0) {
        if (auto pre = internal_prefix(view, r.repo_name, *target)) {
          edge(from, *g.find(r.repo_name, *pre), i);
        } else {
          edge(from, node("", *target, true), i);
        }
      }
    } else {
      if (auto pre = internal_prefix(view, r.repo_name, *target)) {
        edge(from, *g.find(r.repo_name, *pre), i);
      } else {
        edge(from, node("", *target, true), i);
      }
    }
  }
  std::sort(g.edges.begin(), g.edges.end(),
            [](const ImportEdge& a, const ImportEdge& b) { return std::tie(a.from, a.to) < std::tie(b.from, b.to); });
  return g;
}

}  // namespace blockforge
