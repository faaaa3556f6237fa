#pragma once

#include "taintlens/graph.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace taintlens::minilang {

struct SourceFile {
  std::string path; ///< relative, forward slashes
  std::string text;
};

bool is_test_file(std::string_view path, std::string_view marker = "src/test");

struct SourcePos {
  std::string file;
  int line = 1;
  int column = 1;
};

/// Base of every frontend diagnostic; what() reads "file:line:col: message".
class FrontendError : public std::runtime_error {
public:
  FrontendError(const std::string &kind, const SourcePos &pos,
                const std::string &message);
  const SourcePos &pos() const { return pos_; }
  const std::string &message() const { return message_; }

private:
  SourcePos pos_;
  std::string message_;
};

class SyntaxError : public FrontendError {
public:
  SyntaxError(const SourcePos &pos, const std::string &message)
      : FrontendError("syntax error", pos, message) {}
};

class DuplicateDefinition : public FrontendError {
public:
  DuplicateDefinition(const SourcePos &pos, const std::string &message)
      : FrontendError("duplicate definition", pos, message) {}
};

class UnresolvedCall : public FrontendError {
public:
  UnresolvedCall(const SourcePos &pos, const std::string &message)
      : FrontendError("unresolved call", pos, message) {}
};

class InternalInconsistency : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

enum class ExprKind { StringLit, Var, Concat, Call, ReceiverCall };

/// For Call/ReceiverCall: which declaration the call resolved to.
struct CallTarget {
  bool external = false;
  std::size_t index = 0; ///< into MiniProgram::externs or ::functions
};

struct Expr {
  ExprKind kind = ExprKind::StringLit;
  SourcePos pos;
  std::string source_text;
  /// Literal value, variable name, or the dotted callee (Call) / method
  /// name (ReceiverCall) as written.
  std::string text;
  std::vector<std::string> chain; ///< dotted segments of a Call
  ExprPtr receiver;               ///< ReceiverCall, or the implicit receiver
                                  ///< when `x.m()` names a variable
  std::vector<ExprPtr> operands;  ///< call arguments or Concat lhs/rhs
  int slot = -1;                  ///< resolved variable (Var)
  std::optional<CallTarget> target;
};

enum class StmtKind { Let, Assign, Return, Throw, Try, If, ExprStmt };

struct Stmt {
  StmtKind kind = StmtKind::ExprStmt;
  SourcePos pos;
  std::string source_text;
  std::string name; ///< Let/Assign variable, Try catch variable
  int slot = -1;    ///< Let/Assign target, Try catch variable
  ExprPtr expr;     ///< value / condition; null for bare `return;`
  std::vector<Stmt> body;      ///< If-then, Try-block
  std::vector<Stmt> else_body; ///< If-else, Try-catch block
  bool has_else = false;
  SourcePos catch_pos;
};

struct ExternDecl {
  std::string qualified_name;
  ApiSignature api;
  std::string return_type;
  SourcePos pos;
  bool returns_value() const { return return_type != "void"; }
};

struct FunctionDecl {
  std::string name;
  std::string qualified_name;
  ApiSignature api;
  Visibility visibility = Visibility::Private;
  std::vector<std::string> params;
  std::vector<SourcePos> param_pos;
  std::vector<Stmt> body;
  SourcePos pos;
  std::optional<std::string> doc;
  int slot_count = 0;
  bool returns_value = false;
};

struct MiniProgram {
  std::vector<ExternDecl> externs;
  std::vector<FunctionDecl> functions;
  std::vector<SourceFile> files;
};

/// Parses and resolves a project. Throws SyntaxError, DuplicateDefinition
/// or UnresolvedCall.
MiniProgram parse(std::vector<SourceFile> files);

/// Builds the interprocedural dataflow graph. Deterministic for identical
/// input.
DataflowGraph build_dfg(const MiniProgram &program);

/// All `.ml` files under `root`, sorted by relative path.
std::vector<SourceFile> load_sources(const std::filesystem::path &root);

} // namespace taintlens::minilang
