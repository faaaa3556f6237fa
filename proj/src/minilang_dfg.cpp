#include "taintlens/minilang.hpp"

#include <algorithm>

namespace taintlens::minilang {

namespace {

/// Reaching definitions per variable slot. Each entry is sorted and unique.
using Env = std::vector<std::vector<NodeId>>;

Env merge(const Env &a, const Env &b) {
  Env out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::set_union(a[i].begin(), a[i].end(), b[i].begin(), b[i].end(),
                   std::back_inserter(out[i]));
  }
  return out;
}

class DfgBuilder {
public:
  explicit DfgBuilder(const MiniProgram &p)
      : p_(p), params_(p.functions.size()), returns_(p.functions.size()),
        results_(p.functions.size()) {}

  DataflowGraph run() {
    for (std::size_t i = 0; i < p_.functions.size(); ++i) {
      const auto &f = p_.functions[i];
      fn_ = &f;
      FunctionInfo info;
      info.qualified_name = f.qualified_name;
      info.api = f.api;
      info.visibility = f.visibility;
      info.param_names = f.params;
      info.defined_in_file = f.pos.file;
      info.doc = f.doc;
      for (std::size_t k = 0; k < f.params.size(); ++k) {
        DfgNode n = make(NodeKind::Parameter, f.param_pos[k], f.params[k]);
        n.position = static_cast<int>(k);
        n.function_id = f.qualified_name;
        params_[i].push_back(gb_.add_node(std::move(n)));
      }
      info.param_nodes = params_[i];
      gb_.add_function(std::move(info));
    }

    for (std::size_t i = 0; i < p_.functions.size(); ++i) {
      fn_ = &p_.functions[i];
      fn_index_ = i;
      Env env(static_cast<std::size_t>(fn_->slot_count));
      for (std::size_t k = 0; k < params_[i].size(); ++k)
        env[k] = {params_[i][k]};
      catch_stack_.clear();
      block(fn_->body, env);
    }

    // Callee return values flow to every call site's result.
    for (std::size_t i = 0; i < p_.functions.size(); ++i)
      for (auto ret : returns_[i])
        for (auto res : results_[i])
          gb_.add_edge(ret, res, EdgeKind::Data);

    auto g = std::move(gb_).build();
    if (auto violations = validate_graph(g); !violations.empty())
      throw InternalInconsistency("graph builder produced an invalid graph: " +
                                  violations.front().kind + " " +
                                  violations.front().detail);
    return g;
  }

private:
  DfgNode make(NodeKind kind, const SourcePos &pos, std::string code) const {
    DfgNode n;
    n.kind = kind;
    n.file = pos.file;
    n.line = pos.line;
    n.column = pos.column;
    n.enclosing_function = fn_->qualified_name;
    n.code_text = std::move(code);
    return n;
  }

  NodeId add(NodeKind kind, const SourcePos &pos, std::string code) {
    return gb_.add_node(make(kind, pos, std::move(code)));
  }

  void block(const std::vector<Stmt> &body, Env &env) {
    for (const auto &s : body)
      statement(s, env);
  }

  void statement(const Stmt &s, Env &env) {
    switch (s.kind) {
    case StmtKind::Let:
    case StmtKind::Assign: {
      auto value = eval(*s.expr, env);
      auto def = add(NodeKind::LocalDef, s.pos, s.source_text);
      if (value)
        gb_.add_edge(*value, def);
      env[static_cast<std::size_t>(s.slot)] = {def};
      break;
    }
    case StmtKind::Return:
      if (s.expr) {
        auto value = eval(*s.expr, env);
        auto ret = add(NodeKind::Return, s.pos, s.source_text);
        if (value)
          gb_.add_edge(*value, ret);
        returns_[fn_index_].push_back(ret);
      }
      break;
    case StmtKind::Throw: {
      auto value = eval(*s.expr, env);
      auto thrown = add(NodeKind::ThrowValue, s.pos, s.source_text);
      if (value)
        gb_.add_edge(*value, thrown);
      if (!catch_stack_.empty())
        gb_.add_edge(thrown, catch_stack_.back(), EdgeKind::Exceptional);
      break;
    }
    case StmtKind::ExprStmt:
      eval(*s.expr, env);
      break;
    case StmtKind::If: {
      auto cond = eval(*s.expr, env);
      auto first = gb_.node_count();
      Env then_env = env;
      block(s.body, then_env);
      Env else_env = env;
      if (s.has_else)
        block(s.else_body, else_env);
      env = merge(then_env, else_env);
      if (cond)
        control_edges(*cond, first);
      break;
    }
    case StmtKind::Try: {
      auto catch_param =
          add(NodeKind::CatchParam, s.catch_pos, s.source_text);
      Env try_env = env;
      catch_stack_.push_back(catch_param);
      block(s.body, try_env);
      catch_stack_.pop_back();
      Env catch_env = merge(env, try_env);
      catch_env[static_cast<std::size_t>(s.slot)] = {catch_param};
      block(s.else_body, catch_env);
      env = merge(try_env, catch_env);
      break;
    }
    }
  }

  // Branch-local definitions, returns and throws depend on the condition.
  void control_edges(NodeId cond, std::size_t first) {
    for (std::size_t i = first; i < gb_.node_count(); ++i) {
      NodeId id{i + 1};
      auto kind = gb_.node(id).kind;
      if (kind == NodeKind::LocalDef || kind == NodeKind::Return ||
          kind == NodeKind::ThrowValue)
        gb_.add_edge(cond, id, EdgeKind::Control);
    }
  }

  std::optional<NodeId> eval(const Expr &e, Env &env) {
    switch (e.kind) {
    case ExprKind::StringLit:
      return add(NodeKind::Literal, e.pos, e.source_text);
    case ExprKind::Var: {
      auto use = add(NodeKind::VarUse, e.pos, e.text);
      for (auto def : env[static_cast<std::size_t>(e.slot)])
        gb_.add_edge(def, use);
      return use;
    }
    case ExprKind::Concat: {
      auto lhs = eval(*e.operands[0], env);
      auto rhs = eval(*e.operands[1], env);
      auto cat = add(NodeKind::Concat, e.pos, e.source_text);
      if (lhs)
        gb_.add_edge(*lhs, cat);
      if (rhs)
        gb_.add_edge(*rhs, cat);
      return cat;
    }
    case ExprKind::Call:
    case ExprKind::ReceiverCall:
      return call(e, env);
    }
    return std::nullopt;
  }

  std::optional<NodeId> call(const Expr &e, Env &env) {
    std::vector<std::pair<int, std::optional<NodeId>>> values;
    if (e.receiver)
      values.emplace_back(-1, eval(*e.receiver, env));
    for (std::size_t i = 0; i < e.operands.size(); ++i)
      values.emplace_back(static_cast<int>(i), eval(*e.operands[i], env));

    const auto &target = *e.target;
    CallRecord rec;
    bool returns_value = false;
    if (target.external) {
      const auto &x = p_.externs[target.index];
      rec.callee = x.api;
      returns_value = x.returns_value();
    } else {
      const auto &f = p_.functions[target.index];
      rec.callee = f.api;
      returns_value = f.returns_value;
    }
    rec.caller = fn_->qualified_name;
    rec.file = e.pos.file;
    rec.line = e.pos.line;
    auto call_id = gb_.add_call(rec);

    for (std::size_t k = 0; k < values.size(); ++k) {
      const auto &[pos, value] = values[k];
      const Expr &arg_expr =
          pos < 0 ? *e.receiver : *e.operands[static_cast<std::size_t>(pos)];
      DfgNode n = make(NodeKind::Argument, arg_expr.pos, arg_expr.source_text);
      n.position = pos;
      n.call_id = call_id;
      auto arg = gb_.add_node(std::move(n));
      if (value)
        gb_.add_edge(*value, arg);
      gb_.call(call_id).arg_nodes.emplace(pos, arg);
      if (!target.external && pos >= 0)
        gb_.add_edge(arg, params_[target.index][static_cast<std::size_t>(pos)]);
    }

    if (!returns_value)
      return std::nullopt;
    auto result = add(NodeKind::CallResult, e.pos, e.source_text);
    gb_.call(call_id).result_node = result;
    if (!target.external)
      results_[target.index].push_back(result);
    return result;
  }

  const MiniProgram &p_;
  GraphBuilder gb_;
  std::vector<std::vector<NodeId>> params_;
  std::vector<std::vector<NodeId>> returns_;
  std::vector<std::vector<NodeId>> results_;
  std::vector<NodeId> catch_stack_;
  const FunctionDecl *fn_ = nullptr;
  std::size_t fn_index_ = 0;
};

} // namespace

DataflowGraph build_dfg(const MiniProgram &program) {
  return DfgBuilder(program).run();
}

} // namespace taintlens::minilang
