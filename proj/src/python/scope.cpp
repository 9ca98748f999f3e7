#include "blockforge/python/scope.hpp"

#include <algorithm>
#include <memory>
#include <unordered_set>

namespace blockforge::python {
namespace {

struct PendingUse {
  std::string id;
  std::uint32_t offset;
  std::string dotted;
  bool header;
};

struct Scope {
  ScopeKind kind;
  std::string name;
  Scope* parent = nullptr;
  std::unordered_set<std::string> bound;
  std::unordered_set<std::string> globals;
  std::unordered_set<std::string> nonlocals;
  std::vector<PendingUse> uses;
  std::vector<std::unique_ptr<Scope>> children;

  Scope* child(ScopeKind k, std::string n) {
    children.push_back(std::make_unique<Scope>());
    Scope* c = children.back().get();
    c->kind = k;
    c->name = std::move(n);
    c->parent = this;
    return c;
  }
};

class Analyzer {
 public:
  void run(const Node& stmt, Scope& module) {
    header_ = false;
    top_level(stmt, module);
  }

 private:
  void top_level(const Node& stmt, Scope& module) {
    // Headers of the definition itself carry the in_header flag for dotted
    // qualified-name resolution of bases and decorators.
    if (stmt.kind == NodeKind::ClassDef) {
      header_ = true;
      for (const auto& d : stmt.kid(0).kids) expr(*d, module);
      for (const auto& a : stmt.kid(1).kids) expr(*a, module);
      header_ = false;
      module.bound.insert(stmt.value);
      Scope* cls = module.child(ScopeKind::Class, stmt.value);
      for (const auto& s : stmt.kid(2).kids) statement(*s, *cls);
      return;
    }
    if (stmt.kind == NodeKind::FunctionDef) {
      header_ = true;
      for (const auto& d : stmt.kid(0).kids) expr(*d, module);
      header_ = false;
      function(stmt, module);
      return;
    }
    statement(stmt, module);
  }

  void use(const std::string& id, std::uint32_t offset, Scope& s, std::string dotted = {}) {
    s.uses.push_back(PendingUse{id, offset, dotted.empty() ? id : std::move(dotted), header_});
  }

  static Scope& binding_scope_for_walrus(Scope& s) {
    Scope* cur = &s;
    while (cur->kind == ScopeKind::Comprehension && cur->parent) cur = cur->parent;
    return *cur;
  }

  void bind(const std::string& name, Scope& s) { s.bound.insert(name); }

  void bind_target(const Node& t, Scope& s) {
    switch (t.kind) {
      case NodeKind::Name:
        bind(t.value, s);
        break;
      case NodeKind::Tuple:
      case NodeKind::List:
        for (const auto& k : t.kids) bind_target(*k, s);
        break;
      case NodeKind::Starred:
        bind_target(t.kid(0), s);
        break;
      case NodeKind::Attribute:
        expr(t.kid(0), s);
        break;
      case NodeKind::Subscript:
        expr(t.kid(0), s);
        expr(t.kid(1), s);
        break;
      default:
        expr(t, s);
        break;
    }
  }

  void function(const Node& fn, Scope& outer) {
    const Node& args = fn.kid(1);
    for (const auto& p : args.kids) {
      if (!p->kid(0).empty()) expr(p->kid(0), outer);
      if (!p->kid(1).empty()) expr(p->kid(1), outer);
    }
    if (!fn.kid(2).empty()) expr(fn.kid(2), outer);
    bind(fn.value, outer);
    Scope* f = outer.child(ScopeKind::Function, fn.value);
    for (const auto& p : args.kids) bind(p->value, *f);
    for (const auto& s : fn.kid(3).kids) statement(*s, *f);
  }

  void suite(const Node& n, Scope& s) {
    if (n.empty()) return;
    for (const auto& k : n.kids) statement(*k, s);
  }

  void statement(const Node& n, Scope& s) {
    switch (n.kind) {
      case NodeKind::FunctionDef:
        for (const auto& d : n.kid(0).kids) expr(*d, s);
        function(n, s);
        break;
      case NodeKind::ClassDef: {
        for (const auto& d : n.kid(0).kids) expr(*d, s);
        for (const auto& a : n.kid(1).kids) expr(*a, s);
        bind(n.value, s);
        Scope* cls = s.child(ScopeKind::Class, n.value);
        suite(n.kid(2), *cls);
        break;
      }
      case NodeKind::Assign:
        expr(*n.kids.back(), s);
        for (std::size_t i = 0; i + 1 < n.kids.size(); ++i) bind_target(*n.kids[i], s);
        break;
      case NodeKind::AugAssign:
        if (n.kid(0).kind == NodeKind::Name) {
          use(n.kid(0).value, n.kid(0).begin, s);
          bind(n.kid(0).value, s);
        } else {
          bind_target(n.kid(0), s);
        }
        expr(n.kid(1), s);
        break;
      case NodeKind::AnnAssign:
        // Annotations of function locals are never evaluated.
        if (s.kind != ScopeKind::Function) expr(n.kid(1), s);
        if (n.kids.size() > 2) expr(n.kid(2), s);
        if (n.kid(0).kind == NodeKind::Name) {
          bind(n.kid(0).value, s);
        } else {
          bind_target(n.kid(0), s);
        }
        break;
      case NodeKind::Delete:
        for (const auto& t : n.kids) bind_target(*t, s);
        break;
      case NodeKind::For:
        expr(n.kid(1), s);
        bind_target(n.kid(0), s);
        suite(n.kid(2), s);
        suite(n.kid(3), s);
        break;
      case NodeKind::While:
      case NodeKind::If:
        expr(n.kid(0), s);
        suite(n.kid(1), s);
        suite(n.kid(2), s);
        break;
      case NodeKind::With:
        for (std::size_t i = 0; i + 1 < n.kids.size(); ++i) {
          const Node& item = n.kid(i);
          expr(item.kid(0), s);
          if (!item.kid(1).empty()) bind_target(item.kid(1), s);
        }
        suite(*n.kids.back(), s);
        break;
      case NodeKind::Try:
        suite(n.kid(0), s);
        for (std::size_t i = 1; i + 2 < n.kids.size(); ++i) {
          const Node& h = n.kid(i);
          if (!h.kid(0).empty()) expr(h.kid(0), s);
          if (!h.value.empty()) bind(h.value, s);
          suite(h.kid(1), s);
        }
        suite(n.kid(n.kids.size() - 2), s);
        suite(n.kid(n.kids.size() - 1), s);
        break;
      case NodeKind::Import:
        for (const auto& a : n.kids) {
          if (!a->extra.empty()) {
            bind(a->extra, s);
          } else {
            bind(a->value.substr(0, a->value.find('.')), s);
          }
        }
        break;
      case NodeKind::ImportFrom:
        for (const auto& a : n.kids) {
          if (a->value == "*") continue;
          bind(a->extra.empty() ? a->value : a->extra, s);
        }
        break;
      case NodeKind::Global:
        for (const auto& k : n.kids) s.globals.insert(k->value);
        break;
      case NodeKind::Nonlocal:
        for (const auto& k : n.kids) s.nonlocals.insert(k->value);
        break;
      case NodeKind::Match:
        expr(n.kid(0), s);
        for (std::size_t i = 1; i < n.kids.size(); ++i) {
          const Node& c = n.kid(i);
          pattern(c.kid(0), s);
          if (!c.kid(1).empty()) expr(c.kid(1), s);
          suite(c.kid(2), s);
        }
        break;
      case NodeKind::Pass:
      case NodeKind::Break:
      case NodeKind::Continue:
        break;
      default:  // Return, Raise, Assert, ExprStmt
        for (const auto& k : n.kids) {
          if (!k->empty()) expr(*k, s);
        }
        break;
    }
  }

  void pattern(const Node& p, Scope& s) {
    switch (p.kind) {
      case NodeKind::PatternCapture:
      case NodeKind::PatternStar:
        if (p.value != "_") bind(p.value, s);
        break;
      case NodeKind::PatternAs:
        pattern(p.kid(0), s);
        bind(p.value, s);
        break;
      case NodeKind::PatternValue:
      case NodeKind::PatternLiteral:
        expr(p.kid(0), s);
        break;
      case NodeKind::PatternMapping:
        for (const auto& k : p.kids) pattern(*k, s);
        if (!p.extra.empty()) bind(p.extra, s);
        break;
      case NodeKind::PatternClass:
        expr(p.kid(0), s);
        for (std::size_t i = 1; i < p.kids.size(); ++i) pattern(p.kid(i), s);
        break;
      case NodeKind::PatternKeyword:
        pattern(p.kid(0), s);
        break;
      default:  // PatternSequence, PatternOr
        for (const auto& k : p.kids) pattern(*k, s);
        break;
    }
  }

  void comprehension(const Node& n, Scope& s, std::size_t first_clause) {
    // The outermost iterable is evaluated in the enclosing scope.
    const Node& first = n.kid(first_clause);
    expr(first.kid(1), s);
    Scope* c = s.child(ScopeKind::Comprehension, std::string(kind_name(n.kind)));
    for (std::size_t i = first_clause; i < n.kids.size(); ++i) {
      const Node& clause = n.kid(i);
      bind_target(clause.kid(0), *c);
      if (i != first_clause) expr(clause.kid(1), *c);
      for (std::size_t j = 2; j < clause.kids.size(); ++j) expr(clause.kid(j), *c);
    }
    for (std::size_t i = 0; i < first_clause; ++i) expr(n.kid(i), *c);
  }

  void expr(const Node& n, Scope& s) {
    switch (n.kind) {
      case NodeKind::Empty:
        return;
      case NodeKind::Name:
        use(n.value, n.begin, s);
        return;
      case NodeKind::Attribute: {
        std::string d = dotted_name(n);
        if (!d.empty()) {
          const Node* root = &n;
          while (root->kind == NodeKind::Attribute) root = root->kids[0].get();
          use(root->value, root->begin, s, d);
          return;
        }
        expr(n.kid(0), s);
        return;
      }
      case NodeKind::Lambda: {
        const Node& args = n.kid(0);
        for (const auto& p : args.kids) {
          if (!p->kid(1).empty()) expr(p->kid(1), s);
        }
        Scope* l = s.child(ScopeKind::Lambda, "<lambda>");
        for (const auto& p : args.kids) bind(p->value, *l);
        expr(n.kid(1), *l);
        return;
      }
      case NodeKind::ListComp:
      case NodeKind::SetComp:
      case NodeKind::GeneratorExp:
        comprehension(n, s, 1);
        return;
      case NodeKind::DictComp:
        comprehension(n, s, 2);
        return;
      case NodeKind::NamedExpr:
        expr(n.kid(1), s);
        bind(n.kid(0).value, binding_scope_for_walrus(s));
        return;
      default:
        for (const auto& k : n.kids) expr(*k, s);
        return;
    }
  }

  bool header_ = false;
};

void collect(const Scope& s, std::vector<FreeName>& out) {
  for (const PendingUse& u : s.uses) {
    const Scope* cur = &s;
    bool free = false;
    std::vector<ScopeDescriptor> chain;
    for (const Scope* c = &s; c; c = c->parent) chain.push_back(ScopeDescriptor{c->kind, c->name});
    while (cur) {
      if (cur->globals.count(u.id)) {
        free = true;
        break;
      }
      if (cur->nonlocals.count(u.id)) break;
      if (cur->kind == ScopeKind::Module) {
        free = true;
        break;
      }
      if (cur->bound.count(u.id)) break;
      const Scope* up = cur->parent;
      // Class namespaces are only visible to code directly in the class body.
      while (up && up->kind == ScopeKind::Class) up = up->parent;
      cur = up;
    }
    if (free) out.push_back(FreeName{u.id, u.offset, chain, u.dotted, u.header});
  }
  for (const auto& c : s.children) collect(*c, out);
}

void module_targets(const Node& t, std::vector<std::string>& out) {
  switch (t.kind) {
    case NodeKind::Name:
      out.push_back(t.value);
      break;
    case NodeKind::Tuple:
    case NodeKind::List:
      for (const auto& k : t.kids) module_targets(*k, out);
      break;
    case NodeKind::Starred:
      module_targets(t.kid(0), out);
      break;
    default:
      break;
  }
}

}  // namespace

std::string_view to_string(ScopeKind kind) noexcept {
  switch (kind) {
    case ScopeKind::Module: return "module";
    case ScopeKind::Function: return "function";
    case ScopeKind::Class: return "class";
    case ScopeKind::Lambda: return "lambda";
    case ScopeKind::Comprehension: return "comprehension";
  }
  return "?";
}

std::vector<FreeName> free_names(const Node& statement) {
  Scope module;
  module.kind = ScopeKind::Module;
  module.name = "<module>";
  Analyzer().run(statement, module);
  std::vector<FreeName> out;
  collect(module, out);
  std::stable_sort(out.begin(), out.end(),
                   [](const FreeName& a, const FreeName& b) { return a.use_site < b.use_site; });
  return out;
}

std::vector<std::string> module_bindings(const Node& n) {
  std::vector<std::string> out;
  switch (n.kind) {
    case NodeKind::FunctionDef:
    case NodeKind::ClassDef:
      out.push_back(n.value);
      break;
    case NodeKind::Assign:
      for (std::size_t i = 0; i + 1 < n.kids.size(); ++i) module_targets(*n.kids[i], out);
      break;
    case NodeKind::AnnAssign:
    case NodeKind::AugAssign:
      module_targets(n.kid(0), out);
      break;
    case NodeKind::Import:
      for (const auto& a : n.kids) out.push_back(a->extra.empty() ? a->value.substr(0, a->value.find('.')) : a->extra);
      break;
    case NodeKind::ImportFrom:
      for (const auto& a : n.kids) {
        if (a->value != "*") out.push_back(a->extra.empty() ? a->value : a->extra);
      }
      break;
    default:
      break;
  }
  return out;
}

}  // namespace blockforge::python
