#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rwdecoy/simcore/api.hpp"
#include "rwdecoy/simcore/value.hpp"

namespace rwdecoy::simcore {

// Argument and assignment expressions. Evaluation lives in the kernel.
struct Expr {
  enum class Kind { lit, var, concat, digest, xcrypt };

  Kind kind = Kind::lit;
  Value literal;
  std::string var;
  std::vector<Expr> args;
  std::uint32_t length = 0;  // digest output length in bytes

  static Expr lit(Value v);
  static Expr ref(std::string name);
  static Expr concat(std::vector<Expr> parts);
  // Truncated SHA-256 over the concatenated encodings of `parts`.
  static Expr digest(std::vector<Expr> parts, std::uint32_t length);
  // Cipher embedded in the program body: no API call is made.
  static Expr xcrypt(Expr data, Expr key);

  friend bool operator==(const Expr&, const Expr&) = default;
};

struct StackRegs {
  Address base = 0;
  Address limit = 0;
  friend bool operator==(const StackRegs&, const StackRegs&) = default;
};

struct CallApi {
  Api api = Api::CreateFile;
  std::map<std::string, Expr> args;
  std::string out;  // variable receiving the return slot; empty discards it
  friend bool operator==(const CallApi&, const CallApi&) = default;
};

struct Jmp {
  Address target = 0;
  std::optional<StackRegs> restore;  // applied before the jump lands
  friend bool operator==(const Jmp&, const Jmp&) = default;
};

struct Assign {
  std::string var;
  Expr expr;
  friend bool operator==(const Assign&, const Assign&) = default;
};

struct Halt {
  friend bool operator==(const Halt&, const Halt&) = default;
};

using Instruction = std::variant<CallApi, Jmp, Assign, Halt>;

struct SimProgram {
  std::map<Address, Instruction> instructions;
  Address entry_point = 0;
  Bytes code_image;
  StackRegs stack{0x7fff0000, 0x7ffe0000};

  friend bool operator==(const SimProgram&, const SimProgram&) = default;
};

struct ProgramDefect {
  Address address;
  ErrorCode code;
  std::string detail;
};

// First violated invariant, scanning in address order (entry point first).
std::optional<ProgramDefect> find_defect(const SimProgram& program);
void validate(const SimProgram& program);

std::string serialize_program(const SimProgram& program);
SimProgram parse_program(std::string_view json_text);
Digest256 program_digest(const SimProgram& program);

// Incremental builder used by the corpus generator and tests.
class ProgramBuilder {
 public:
  Address next_address() const { return next_; }
  Address call(Api api, std::map<std::string, Expr> args = {}, std::string out = {});
  Address assign(std::string var, Expr expr);
  Address jmp(Address target);
  Address halt();
  ProgramBuilder& code_image(Bytes image);
  ProgramBuilder& stack(StackRegs regs);
  SimProgram build() const;

 private:
  Address emit(Instruction ins);
  SimProgram program_;
  Address next_ = 0;
};

}  // namespace rwdecoy::simcore
