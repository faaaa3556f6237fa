#include "taintlens/minilang.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <future>
#include <map>
#include <set>

namespace taintlens::minilang {

FrontendError::FrontendError(const std::string &kind, const SourcePos &pos,
                             const std::string &message)
    : std::runtime_error(pos.file + ":" + std::to_string(pos.line) + ":" +
                         std::to_string(pos.column) + ": " + kind + ": " +
                         message),
      pos_(pos), message_(message) {}

bool is_test_file(std::string_view path, std::string_view marker) {
  return path.find(marker) != std::string_view::npos;
}

namespace {

// ---------------------------------------------------------------- lexing

enum class Tok { Ident, String, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int line = 1;
  int column = 1;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::optional<std::string> doc; ///< `///` lines directly before the token
};

const std::set<std::string, std::less<>> kKeywords = {
    "extern", "fn",  "public", "private", "let",  "return",
    "throw",  "try", "catch",  "if",      "else",
};

class Lexer {
public:
  explicit Lexer(const SourceFile &file) : file_(file), src_(file.text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_trivia();
      Token t;
      t.line = line_;
      t.column = col_;
      t.begin = pos_;
      if (!pending_doc_.empty()) {
        t.doc = pending_doc_;
        pending_doc_.clear();
      }
      if (pos_ >= src_.size()) {
        t.kind = Tok::End;
        t.end = pos_;
        out.push_back(std::move(t));
        return out;
      }
      char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                src_[pos_] == '_' || src_[pos_] == '$'))
          advance();
        t.kind = Tok::Ident;
        t.text = src_.substr(t.begin, pos_ - t.begin);
      } else if (c == '"') {
        t.kind = Tok::String;
        t.text = string_literal(t);
      } else if (std::string_view("(){};,.:=+[]").find(c) !=
                 std::string_view::npos) {
        advance();
        t.kind = Tok::Punct;
        t.text = std::string(1, c);
      } else {
        throw SyntaxError(pos_of(t), std::string("unexpected character '") +
                                         c + "'");
      }
      t.end = pos_;
      out.push_back(std::move(t));
    }
  }

private:
  SourcePos pos_of(const Token &t) const {
    return {file_.path, t.line, t.column};
  }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_trivia() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (src_.compare(pos_, 3, "///") == 0) {
        for (int i = 0; i < 3; ++i)
          advance();
        std::size_t start = pos_;
        while (pos_ < src_.size() && src_[pos_] != '\n')
          advance();
        auto text = src_.substr(start, pos_ - start);
        auto first = text.find_first_not_of(' ');
        text = first == std::string::npos ? "" : text.substr(first);
        if (!pending_doc_.empty())
          pending_doc_ += "\n";
        pending_doc_ += text;
      } else if (src_.compare(pos_, 2, "//") == 0) {
        while (pos_ < src_.size() && src_[pos_] != '\n')
          advance();
      } else if (src_.compare(pos_, 2, "/*") == 0) {
        Token at;
        at.line = line_;
        at.column = col_;
        advance();
        advance();
        while (pos_ < src_.size() && src_.compare(pos_, 2, "*/") != 0)
          advance();
        if (pos_ >= src_.size())
          throw SyntaxError(pos_of(at), "unterminated block comment");
        advance();
        advance();
      } else {
        return;
      }
    }
  }

  std::string string_literal(const Token &t) {
    advance(); // opening quote
    std::string value;
    while (pos_ < src_.size() && src_[pos_] != '"') {
      char c = src_[pos_];
      if (c == '\n')
        break;
      if (c == '\\') {
        advance();
        if (pos_ >= src_.size())
          break;
        char e = src_[pos_];
        switch (e) {
        case 'n':
          value.push_back('\n');
          break;
        case 't':
          value.push_back('\t');
          break;
        case '"':
        case '\\':
          value.push_back(e);
          break;
        default:
          throw SyntaxError(pos_of(t), std::string("unknown escape \\") + e);
        }
        advance();
        continue;
      }
      value.push_back(c);
      advance();
    }
    if (pos_ >= src_.size() || src_[pos_] != '"')
      throw SyntaxError(pos_of(t), "unterminated string literal");
    advance();
    return value;
  }

  const SourceFile &file_;
  const std::string &src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  std::string pending_doc_;
};

// ---------------------------------------------------------------- parsing

struct ParsedFile {
  std::vector<ExternDecl> externs;
  std::vector<FunctionDecl> functions;
};

/// Package and class a function in `path` belongs to: directories after
/// an optional src/main|src/test|src prefix, and the file stem.
std::pair<std::string, std::string> module_of(std::string_view path) {
  std::string p(path);
  for (std::string_view prefix : {"src/main/", "src/test/", "src/"}) {
    if (p.rfind(prefix, 0) == 0) {
      p = p.substr(prefix.size());
      break;
    }
  }
  auto slash = p.rfind('/');
  std::string dir = slash == std::string::npos ? "" : p.substr(0, slash);
  std::string stem = slash == std::string::npos ? p : p.substr(slash + 1);
  if (auto dot = stem.rfind('.'); dot != std::string::npos)
    stem = stem.substr(0, dot);
  std::replace(dir.begin(), dir.end(), '/', '.');
  if (dir.empty())
    dir = "default";
  return {dir, stem};
}

class Parser {
public:
  Parser(const SourceFile &file, std::vector<Token> tokens)
      : file_(file), toks_(std::move(tokens)) {}

  ParsedFile run() {
    ParsedFile out;
    while (!at_end()) {
      if (is_ident("extern"))
        out.externs.push_back(extern_decl());
      else
        out.functions.push_back(function_decl());
    }
    return out;
  }

private:
  const Token &peek(std::size_t ahead = 0) const {
    return toks_[std::min(idx_ + ahead, toks_.size() - 1)];
  }
  bool at_end() const { return peek().kind == Tok::End; }
  bool is_punct(std::string_view p, std::size_t ahead = 0) const {
    return peek(ahead).kind == Tok::Punct && peek(ahead).text == p;
  }
  bool is_ident(std::string_view word) const {
    return peek().kind == Tok::Ident && peek().text == word;
  }
  SourcePos pos_of(const Token &t) const {
    return {file_.path, t.line, t.column};
  }
  [[noreturn]] void fail(const std::string &what) const {
    const auto &t = peek();
    std::string found = t.kind == Tok::End ? "end of file" : "'" + t.text + "'";
    throw SyntaxError(pos_of(t), what + ", found " + found);
  }
  const Token &take() { return toks_[idx_ < toks_.size() - 1 ? idx_++ : idx_]; }
  void expect(std::string_view p) {
    if (!is_punct(p))
      fail("expected '" + std::string(p) + "'");
    take();
  }
  void expect_keyword(std::string_view k) {
    if (!is_ident(k))
      fail("expected '" + std::string(k) + "'");
    take();
  }
  std::string name() {
    if (peek().kind != Tok::Ident || kKeywords.count(peek().text))
      fail("expected identifier");
    return take().text;
  }
  std::string slice(std::size_t first_tok) const {
    const auto &a = toks_[first_tok];
    const auto &b = toks_[idx_ > first_tok ? idx_ - 1 : first_tok];
    return file_.text.substr(a.begin, b.end - a.begin);
  }

  std::vector<std::string> qname() {
    std::vector<std::string> parts{name()};
    while (is_punct(".")) {
      take();
      parts.push_back(name());
    }
    return parts;
  }

  std::string type() {
    auto parts = qname();
    std::string t;
    for (std::size_t i = 0; i < parts.size(); ++i)
      t += (i ? "." : "") + parts[i];
    while (is_punct("[")) {
      take();
      expect("]");
      t += "[]";
    }
    return t;
  }

  ExternDecl extern_decl() {
    ExternDecl d;
    d.pos = pos_of(peek());
    expect_keyword("extern");
    auto parts = qname();
    if (parts.size() < 3)
      throw SyntaxError(d.pos, "extern name needs package.Class.method");
    expect("(");
    std::vector<std::string> types;
    if (!is_punct(")")) {
      types.push_back(type());
      while (is_punct(",")) {
        take();
        types.push_back(type());
      }
    }
    expect(")");
    expect(":");
    d.return_type = type();
    expect(";");
    d.api.method = parts.back();
    d.api.class_name = parts[parts.size() - 2];
    for (std::size_t i = 0; i + 2 < parts.size(); ++i)
      d.api.package += (i ? "." : "") + parts[i];
    d.api.signature = std::move(types);
    d.api.is_external = true;
    d.qualified_name = d.api.qualified_name();
    return d;
  }

  FunctionDecl function_decl() {
    FunctionDecl f;
    f.doc = peek().doc;
    f.pos = pos_of(peek());
    if (is_ident("public")) {
      take();
      f.visibility = Visibility::Public;
    } else if (is_ident("private")) {
      take();
      f.visibility = Visibility::Private;
    }
    expect_keyword("fn");
    f.name = name();
    expect("(");
    if (!is_punct(")")) {
      for (;;) {
        f.param_pos.push_back(pos_of(peek()));
        f.params.push_back(name());
        if (!is_punct(","))
          break;
        take();
      }
    }
    expect(")");
    f.body = block();
    auto [package, cls] = module_of(file_.path);
    f.api.package = package;
    f.api.class_name = cls;
    f.api.method = f.name;
    f.api.signature.assign(f.params.size(), "String");
    f.api.is_external = false;
    f.qualified_name = f.api.qualified_name();
    return f;
  }

  std::vector<Stmt> block() {
    expect("{");
    std::vector<Stmt> out;
    while (!is_punct("}")) {
      if (at_end())
        fail("expected '}'");
      out.push_back(statement());
    }
    take();
    return out;
  }

  Stmt statement() {
    Stmt s;
    std::size_t first = idx_;
    s.pos = pos_of(peek());
    if (is_ident("let")) {
      take();
      s.kind = StmtKind::Let;
      s.name = name();
      expect("=");
      s.expr = expr();
      s.source_text = slice(first);
      expect(";");
    } else if (is_ident("return")) {
      take();
      s.kind = StmtKind::Return;
      if (!is_punct(";"))
        s.expr = expr();
      s.source_text = slice(first);
      expect(";");
    } else if (is_ident("throw")) {
      take();
      s.kind = StmtKind::Throw;
      s.expr = expr();
      s.source_text = slice(first);
      expect(";");
    } else if (is_ident("try")) {
      take();
      s.kind = StmtKind::Try;
      s.body = block();
      s.catch_pos = pos_of(peek());
      expect_keyword("catch");
      expect("(");
      s.name = name();
      expect(")");
      s.source_text = "catch (" + s.name + ")";
      s.else_body = block();
    } else if (is_ident("if")) {
      take();
      s.kind = StmtKind::If;
      expect("(");
      s.expr = expr();
      expect(")");
      s.source_text = slice(first);
      s.body = block();
      if (is_ident("else")) {
        take();
        s.has_else = true;
        s.else_body = block();
      }
    } else if (peek().kind == Tok::Ident && !kKeywords.count(peek().text) &&
               is_punct("=", 1)) {
      s.kind = StmtKind::Assign;
      s.name = name();
      take();
      s.expr = expr();
      s.source_text = slice(first);
      expect(";");
    } else {
      s.kind = StmtKind::ExprStmt;
      s.expr = expr();
      s.source_text = slice(first);
      expect(";");
    }
    return s;
  }

  std::vector<ExprPtr> args() {
    expect("(");
    std::vector<ExprPtr> out;
    if (!is_punct(")")) {
      out.push_back(expr());
      while (is_punct(",")) {
        take();
        out.push_back(expr());
      }
    }
    expect(")");
    return out;
  }

  ExprPtr expr() {
    std::size_t first = idx_;
    auto lhs = postfix();
    while (is_punct("+")) {
      take();
      auto rhs = postfix();
      auto cat = std::make_unique<Expr>();
      cat->kind = ExprKind::Concat;
      cat->pos = lhs->pos;
      cat->operands.push_back(std::move(lhs));
      cat->operands.push_back(std::move(rhs));
      cat->source_text = slice(first);
      lhs = std::move(cat);
    }
    return lhs;
  }

  ExprPtr postfix() {
    std::size_t first = idx_;
    auto e = primary();
    while (is_punct(".")) {
      take();
      auto call = std::make_unique<Expr>();
      call->kind = ExprKind::ReceiverCall;
      call->pos = e->pos;
      call->text = name();
      if (!is_punct("("))
        fail("expected '(' after method name (field access is not supported)");
      call->operands = args();
      call->receiver = std::move(e);
      call->source_text = slice(first);
      e = std::move(call);
    }
    return e;
  }

  ExprPtr primary() {
    std::size_t first = idx_;
    auto e = std::make_unique<Expr>();
    e->pos = pos_of(peek());
    if (peek().kind == Tok::String) {
      e->kind = ExprKind::StringLit;
      e->text = take().text;
      e->source_text = slice(first);
      return e;
    }
    if (is_punct("(")) {
      take();
      auto inner = expr();
      expect(")");
      return inner;
    }
    if (peek().kind != Tok::Ident || kKeywords.count(peek().text))
      fail("expected expression");
    // Collect `a.b.c` as long as it is not followed by a receiver call
    // on an intermediate segment; calls bind to the whole chain.
    std::vector<std::string> chain{name()};
    while (is_punct(".") && peek(1).kind == Tok::Ident) {
      take();
      chain.push_back(name());
    }
    if (is_punct("(")) {
      e->kind = ExprKind::Call;
      e->chain = chain;
      for (std::size_t i = 0; i < chain.size(); ++i)
        e->text += (i ? "." : "") + chain[i];
      e->operands = args();
      e->source_text = slice(first);
      return e;
    }
    if (chain.size() != 1)
      throw SyntaxError(e->pos, "field access is not supported");
    e->kind = ExprKind::Var;
    e->text = chain.front();
    e->source_text = e->text;
    return e;
  }

  const SourceFile &file_;
  std::vector<Token> toks_;
  std::size_t idx_ = 0;
};

// ---------------------------------------------------------------- resolution

class Resolver {
public:
  explicit Resolver(MiniProgram &p) : p_(p) {
    for (std::size_t i = 0; i < p_.functions.size(); ++i) {
      const auto &f = p_.functions[i];
      if (!fn_by_name_.emplace(f.name, i).second)
        throw DuplicateDefinition(f.pos, "function '" + f.name +
                                             "' is already defined");
    }
    for (std::size_t i = 0; i < p_.externs.size(); ++i) {
      const auto &x = p_.externs[i];
      if (!extern_by_name_.emplace(x.qualified_name, i).second)
        throw DuplicateDefinition(x.pos, "extern '" + x.qualified_name +
                                             "' is already declared");
    }
  }

  void run() {
    for (auto &f : p_.functions)
      function(f);
  }

private:
  void function(FunctionDecl &f) {
    scopes_.assign(1, {});
    next_slot_ = 0;
    for (std::size_t i = 0; i < f.params.size(); ++i)
      declare(f.params[i], f.param_pos[i]);
    returns_value_ = false;
    statements(f.body);
    f.slot_count = next_slot_;
    f.returns_value = returns_value_;
  }

  int declare(const std::string &name, const SourcePos &pos) {
    if (lookup(name) >= 0)
      throw SyntaxError(pos, "variable '" + name + "' is already declared");
    int slot = next_slot_++;
    scopes_.back().emplace(name, slot);
    return slot;
  }

  int lookup(const std::string &name) const {
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it)
      if (auto f = it->find(name); f != it->end())
        return f->second;
    return -1;
  }

  void scoped(std::vector<Stmt> &body) {
    scopes_.emplace_back();
    statements(body);
    scopes_.pop_back();
  }

  void statements(std::vector<Stmt> &body) {
    for (auto &s : body)
      statement(s);
  }

  void statement(Stmt &s) {
    switch (s.kind) {
    case StmtKind::Let:
      expr(*s.expr);
      s.slot = declare(s.name, s.pos);
      break;
    case StmtKind::Assign:
      expr(*s.expr);
      s.slot = lookup(s.name);
      if (s.slot < 0)
        throw SyntaxError(s.pos, "assignment to undeclared variable '" +
                                     s.name + "'");
      break;
    case StmtKind::Return:
      if (s.expr) {
        expr(*s.expr);
        returns_value_ = true;
      }
      break;
    case StmtKind::Throw:
    case StmtKind::ExprStmt:
      expr(*s.expr);
      break;
    case StmtKind::If:
      expr(*s.expr);
      scoped(s.body);
      if (s.has_else)
        scoped(s.else_body);
      break;
    case StmtKind::Try:
      scoped(s.body);
      scopes_.emplace_back();
      s.slot = declare(s.name, s.catch_pos);
      statements(s.else_body);
      scopes_.pop_back();
      break;
    }
  }

  void expr(Expr &e) {
    for (auto &op : e.operands)
      expr(*op);
    switch (e.kind) {
    case ExprKind::StringLit:
    case ExprKind::Concat:
      return;
    case ExprKind::Var:
      e.slot = lookup(e.text);
      if (e.slot < 0)
        throw SyntaxError(e.pos, "use of undeclared variable '" + e.text + "'");
      return;
    case ExprKind::ReceiverCall:
      expr(*e.receiver);
      receiver_call(e);
      return;
    case ExprKind::Call:
      call(e);
      return;
    }
  }

  void call(Expr &e) {
    if (e.chain.size() == 1) {
      auto it = fn_by_name_.find(e.text);
      if (it == fn_by_name_.end())
        throw UnresolvedCall(e.pos, "no function or extern named '" + e.text +
                                        "'");
      const auto &fn = p_.functions[it->second];
      if (fn.params.size() != e.operands.size())
        throw UnresolvedCall(e.pos, "'" + e.text + "' expects " +
                                        std::to_string(fn.params.size()) +
                                        " argument(s)");
      e.target = CallTarget{false, it->second};
      return;
    }
    if (int slot = lookup(e.chain.front()); slot >= 0) {
      if (e.chain.size() != 2)
        throw SyntaxError(e.pos, "field access is not supported");
      auto recv = std::make_unique<Expr>();
      recv->kind = ExprKind::Var;
      recv->pos = e.pos;
      recv->text = e.chain.front();
      recv->source_text = recv->text;
      recv->slot = slot;
      e.kind = ExprKind::ReceiverCall;
      e.text = e.chain.back();
      e.receiver = std::move(recv);
      receiver_call(e);
      return;
    }
    auto it = extern_by_name_.find(e.text);
    if (it == extern_by_name_.end())
      throw UnresolvedCall(e.pos, "no extern declaration for '" + e.text + "'");
    const auto &x = p_.externs[it->second];
    if (x.api.signature.size() != e.operands.size())
      throw UnresolvedCall(e.pos, "'" + e.text + "' expects " +
                                      std::to_string(x.api.signature.size()) +
                                      " argument(s)");
    e.target = CallTarget{true, it->second};
  }

  void receiver_call(Expr &e) {
    std::vector<std::size_t> matches;
    for (std::size_t i = 0; i < p_.externs.size(); ++i) {
      const auto &x = p_.externs[i];
      if (x.api.method == e.text && x.api.signature.size() == e.operands.size())
        matches.push_back(i);
    }
    if (matches.empty())
      throw UnresolvedCall(e.pos, "no extern method '" + e.text + "' taking " +
                                      std::to_string(e.operands.size()) +
                                      " argument(s)");
    if (matches.size() > 1) {
      std::string names;
      for (auto i : matches)
        names += " " + p_.externs[i].qualified_name;
      throw UnresolvedCall(e.pos, "ambiguous method '" + e.text + "':" + names);
    }
    e.target = CallTarget{true, matches.front()};
  }

  MiniProgram &p_;
  std::map<std::string, std::size_t> fn_by_name_;
  std::map<std::string, std::size_t> extern_by_name_;
  std::vector<std::map<std::string, int>> scopes_;
  int next_slot_ = 0;
  bool returns_value_ = false;
};

ParsedFile parse_file(const SourceFile &file) {
  auto tokens = Lexer(file).run();
  return Parser(file, std::move(tokens)).run();
}

} // namespace

MiniProgram parse(std::vector<SourceFile> files) {
  for (auto &f : files)
    std::replace(f.path.begin(), f.path.end(), '\\', '/');
  std::sort(files.begin(), files.end(),
            [](const SourceFile &a, const SourceFile &b) {
              return a.path < b.path;
            });

  // Files are independent until resolution.
  std::vector<std::future<ParsedFile>> pending;
  pending.reserve(files.size());
  for (const auto &f : files)
    pending.push_back(std::async(
        files.size() > 1 ? std::launch::async : std::launch::deferred,
        parse_file, std::cref(f)));

  MiniProgram program;
  for (auto &fut : pending) {
    auto parsed = fut.get();
    for (auto &x : parsed.externs)
      program.externs.push_back(std::move(x));
    for (auto &fn : parsed.functions)
      program.functions.push_back(std::move(fn));
  }
  program.files = std::move(files);
  Resolver(program).run();
  return program;
}

std::vector<SourceFile> load_sources(const std::filesystem::path &root) {
  std::vector<SourceFile> out;
  for (const auto &entry :
       std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".ml")
      continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    auto rel = std::filesystem::relative(entry.path(), root).generic_string();
    out.push_back({rel, std::move(text)});
  }
  std::sort(out.begin(), out.end(),
            [](const SourceFile &a, const SourceFile &b) {
              return a.path < b.path;
            });
  return out;
}

} // namespace taintlens::minilang
