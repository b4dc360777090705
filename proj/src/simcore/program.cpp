#include "rwdecoy/simcore/program.hpp"

#include <json.hpp>

namespace rwdecoy::simcore {

using nlohmann::json;

Expr Expr::lit(Value v) {
  Expr e;
  e.kind = Kind::lit;
  e.literal = std::move(v);
  return e;
}

Expr Expr::ref(std::string name) {
  Expr e;
  e.kind = Kind::var;
  e.var = std::move(name);
  return e;
}

Expr Expr::concat(std::vector<Expr> parts) {
  Expr e;
  e.kind = Kind::concat;
  e.args = std::move(parts);
  return e;
}

Expr Expr::digest(std::vector<Expr> parts, std::uint32_t length) {
  Expr e;
  e.kind = Kind::digest;
  e.args = std::move(parts);
  e.length = length;
  return e;
}

Expr Expr::xcrypt(Expr data, Expr key) {
  Expr e;
  e.kind = Kind::xcrypt;
  e.args = {std::move(data), std::move(key)};
  return e;
}

std::optional<ProgramDefect> find_defect(const SimProgram& program) {
  if (!program.instructions.contains(program.entry_point)) {
    return ProgramDefect{program.entry_point, ErrorCode::invalid_target, "entry point has no instruction"};
  }
  if (program.stack.base <= program.stack.limit) {
    return ProgramDefect{program.entry_point, ErrorCode::malformed_program, "stack base must exceed stack limit"};
  }
  for (const auto& [addr, ins] : program.instructions) {
    if (const auto* j = std::get_if<Jmp>(&ins)) {
      if (!program.instructions.contains(j->target)) {
        return ProgramDefect{addr, ErrorCode::invalid_target,
                             "jump target " + std::to_string(j->target) + " has no instruction"};
      }
    } else if (const auto* a = std::get_if<Assign>(&ins)) {
      if (a->var.empty()) return ProgramDefect{addr, ErrorCode::malformed_program, "assignment without variable"};
    }
  }
  return std::nullopt;
}

void validate(const SimProgram& program) {
  if (auto d = find_defect(program)) {
    throw Error(d->code, "instruction at address " + std::to_string(d->address) + ": " + d->detail);
  }
}

namespace {

json value_to_json(const Value& v) {
  struct Visitor {
    json operator()(std::monostate) const { return nullptr; }
    json operator()(bool b) const { return json{{"bool", b}}; }
    json operator()(std::int64_t n) const { return json{{"int", n}}; }
    json operator()(const std::string& s) const { return json{{"str", s}}; }
    json operator()(HandleId h) const { return json{{"handle", h.value}}; }
    json operator()(const Buffer& b) const {
      json j{{"bytes", to_hex(b.bytes)}};
      if (b.tag != 0) j["tag"] = b.tag;
      if (!b.lineage.empty()) j["lineage"] = b.lineage;
      return j;
    }
  };
  return std::visit(Visitor{}, v);
}

[[noreturn]] void bad_field(const std::string& where, const std::string& field) {
  throw Error(ErrorCode::format, where + ": missing or invalid field '" + field + "'");
}

Value value_from_json(const json& j, const std::string& where) {
  if (j.is_null()) return std::monostate{};
  if (!j.is_object() || j.size() == 0) bad_field(where, "value");
  if (j.contains("bool") && j["bool"].is_boolean()) return j["bool"].get<bool>();
  if (j.contains("int") && j["int"].is_number_integer()) return j["int"].get<std::int64_t>();
  if (j.contains("str") && j["str"].is_string()) return j["str"].get<std::string>();
  if (j.contains("handle") && j["handle"].is_number_unsigned()) return HandleId{j["handle"].get<std::uint32_t>()};
  if (j.contains("bytes") && j["bytes"].is_string()) {
    Buffer b;
    b.bytes = from_hex(j["bytes"].get<std::string>());
    if (j.contains("tag")) b.tag = j["tag"].get<std::uint64_t>();
    if (j.contains("lineage")) b.lineage = j["lineage"].get<std::vector<std::uint64_t>>();
    return b;
  }
  bad_field(where, "value");
}

json expr_to_json(const Expr& e) {
  auto list = [](const std::vector<Expr>& args) {
    json arr = json::array();
    for (const auto& a : args) arr.push_back(expr_to_json(a));
    return arr;
  };
  switch (e.kind) {
    case Expr::Kind::lit: return json{{"lit", value_to_json(e.literal)}};
    case Expr::Kind::var: return json{{"var", e.var}};
    case Expr::Kind::concat: return json{{"concat", list(e.args)}};
    case Expr::Kind::digest: return json{{"digest", list(e.args)}, {"len", e.length}};
    case Expr::Kind::xcrypt: return json{{"xcrypt", list(e.args)}};
  }
  return nullptr;
}

Expr expr_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) bad_field(where, "expr");
  auto list = [&](const char* key) {
    if (!j[key].is_array()) bad_field(where, key);
    std::vector<Expr> out;
    for (const auto& a : j[key]) out.push_back(expr_from_json(a, where));
    return out;
  };
  if (j.contains("lit")) return Expr::lit(value_from_json(j["lit"], where));
  if (j.contains("var")) {
    if (!j["var"].is_string()) bad_field(where, "var");
    return Expr::ref(j["var"].get<std::string>());
  }
  if (j.contains("concat")) return Expr::concat(list("concat"));
  if (j.contains("digest")) {
    if (!j.contains("len") || !j["len"].is_number_unsigned()) bad_field(where, "len");
    return Expr::digest(list("digest"), j["len"].get<std::uint32_t>());
  }
  if (j.contains("xcrypt")) {
    auto args = list("xcrypt");
    if (args.size() != 2) bad_field(where, "xcrypt");
    return Expr::xcrypt(std::move(args[0]), std::move(args[1]));
  }
  bad_field(where, "expr");
}

json instruction_to_json(Address addr, const Instruction& ins) {
  json j{{"addr", addr}};
  if (const auto* c = std::get_if<CallApi>(&ins)) {
    json in = json::object();
    for (const auto& [k, e] : c->args) in[k] = expr_to_json(e);
    j["op"] = "call";
    j["args"] = json{{"api", std::string(to_string(c->api))}, {"in", in}, {"out", c->out}};
  } else if (const auto* jm = std::get_if<Jmp>(&ins)) {
    j["op"] = "jmp";
    j["args"] = json{{"target", jm->target}};
    if (jm->restore) j["args"]["restore"] = json{{"base", jm->restore->base}, {"limit", jm->restore->limit}};
  } else if (const auto* a = std::get_if<Assign>(&ins)) {
    j["op"] = "assign";
    j["args"] = json{{"var", a->var}, {"expr", expr_to_json(a->expr)}};
  } else {
    j["op"] = "halt";
    j["args"] = json::object();
  }
  return j;
}

Instruction instruction_from_json(const json& j, const std::string& where) {
  if (!j.contains("op") || !j["op"].is_string()) bad_field(where, "op");
  if (!j.contains("args") || !j["args"].is_object()) bad_field(where, "args");
  const auto op = j["op"].get<std::string>();
  const json& args = j["args"];
  if (op == "call") {
    CallApi c;
    if (!args.contains("api") || !args["api"].is_string()) bad_field(where, "api");
    auto api = api_from_string(args["api"].get<std::string>());
    if (!api) bad_field(where, "api");
    c.api = *api;
    if (args.contains("in")) {
      if (!args["in"].is_object()) bad_field(where, "in");
      for (const auto& [k, v] : args["in"].items()) c.args.emplace(k, expr_from_json(v, where));
    }
    if (args.contains("out")) {
      if (!args["out"].is_string()) bad_field(where, "out");
      c.out = args["out"].get<std::string>();
    }
    return c;
  }
  if (op == "jmp") {
    Jmp jm;
    if (!args.contains("target") || !args["target"].is_number_unsigned()) bad_field(where, "target");
    jm.target = args["target"].get<Address>();
    if (args.contains("restore")) {
      const json& r = args["restore"];
      if (!r.contains("base") || !r.contains("limit")) bad_field(where, "restore");
      jm.restore = StackRegs{r["base"].get<Address>(), r["limit"].get<Address>()};
    }
    return jm;
  }
  if (op == "assign") {
    if (!args.contains("var") || !args["var"].is_string()) bad_field(where, "var");
    if (!args.contains("expr")) bad_field(where, "expr");
    return Assign{args["var"].get<std::string>(), expr_from_json(args["expr"], where)};
  }
  if (op == "halt") return Halt{};
  bad_field(where, "op");
}

}  // namespace

std::string serialize_program(const SimProgram& program) {
  json instructions = json::array();
  for (const auto& [addr, ins] : program.instructions) instructions.push_back(instruction_to_json(addr, ins));
  json doc{
      {"entry", program.entry_point},
      {"instructions", std::move(instructions)},
      {"code_image", to_hex(program.code_image)},
      {"stack", json{{"base", program.stack.base}, {"limit", program.stack.limit}}},
  };
  return doc.dump();
}

SimProgram parse_program(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::format, std::string("program is not valid JSON: ") + e.what());
  }
  SimProgram p;
  try {
    if (!doc.contains("entry") || !doc["entry"].is_number_unsigned()) bad_field("program", "entry");
    p.entry_point = doc["entry"].get<Address>();
    if (!doc.contains("instructions") || !doc["instructions"].is_array()) bad_field("program", "instructions");
    for (const auto& ins : doc["instructions"]) {
      if (!ins.contains("addr") || !ins["addr"].is_number_unsigned()) bad_field("instruction", "addr");
      const auto addr = ins["addr"].get<Address>();
      const std::string where = "instruction " + std::to_string(addr);
      if (!p.instructions.emplace(addr, instruction_from_json(ins, where)).second) bad_field(where, "addr");
    }
    if (doc.contains("code_image")) p.code_image = from_hex(doc["code_image"].get<std::string>());
    if (!doc.contains("stack") || !doc["stack"].contains("base") || !doc["stack"].contains("limit")) {
      bad_field("program", "stack");
    }
    p.stack = {doc["stack"]["base"].get<Address>(), doc["stack"]["limit"].get<Address>()};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("program field has wrong type: ") + e.what());
  }
  return p;
}

Digest256 program_digest(const SimProgram& program) { return sha256(serialize_program(program)); }

Address ProgramBuilder::emit(Instruction ins) {
  const Address a = next_++;
  program_.instructions.emplace(a, std::move(ins));
  return a;
}

Address ProgramBuilder::call(Api api, std::map<std::string, Expr> args, std::string out) {
  return emit(CallApi{api, std::move(args), std::move(out)});
}

Address ProgramBuilder::assign(std::string var, Expr expr) { return emit(Assign{std::move(var), std::move(expr)}); }

Address ProgramBuilder::jmp(Address target) { return emit(Jmp{target, std::nullopt}); }

Address ProgramBuilder::halt() { return emit(Halt{}); }

ProgramBuilder& ProgramBuilder::code_image(Bytes image) {
  program_.code_image = std::move(image);
  return *this;
}

ProgramBuilder& ProgramBuilder::stack(StackRegs regs) {
  program_.stack = regs;
  return *this;
}

SimProgram ProgramBuilder::build() const { return program_; }

}  // namespace rwdecoy::simcore
