#pragma once

#include <memory>

#include "rwdecoy/deceptor/monitor.hpp"
#include "rwdecoy/kb/knowledge_base.hpp"
#include "rwdecoy/simcore/kernel.hpp"

namespace rwtest {

using namespace rwdecoy;
using namespace rwdecoy::simcore;

inline Expr S(std::string s) { return Expr::lit(Value{std::move(s)}); }
inline Expr N(std::int64_t n) { return Expr::lit(Value{n}); }
inline Expr V(std::string name) { return Expr::ref(std::move(name)); }

inline Bytes text_bytes(std::string_view s) { return {s.begin(), s.end()}; }

inline std::shared_ptr<const kb::KnowledgeBase> default_kb() {
  static auto kb = std::make_shared<const kb::KnowledgeBase>(kb::KnowledgeBase::defaults());
  return kb;
}

inline std::shared_ptr<const cryptodetect::CfsScanner> default_scanner() {
  static auto s = std::make_shared<const cryptodetect::CfsScanner>(default_kb()->cfs);
  return s;
}

// A launched, monitored process over `fs`, ready to step.
struct Monitored {
  Kernel kernel;
  ProcessRun run;
  std::shared_ptr<deceptor::Deceptor> monitor;

  Monitored(const SimProgram& program, const VirtualFs& fs, deceptor::ArcMode arc, std::uint64_t seed = 1)
      : kernel(KernelOptions{seed}) {
    kernel.fs() = fs;
    run = kernel.launch(program, true);
    monitor = std::make_shared<deceptor::Deceptor>(run.pid(), program.code_image, default_kb(), default_scanner(),
                                                   deceptor::DeceptorOptions{arc, {}, seed});
    kernel.attach_interposer(run, monitor);
    kernel.resume(run);
  }

  deceptor::FinalizeResult finish(std::uint64_t max_steps = 100000) {
    const bool exited = kernel.run(run, max_steps);
    return monitor->finalize_process(kernel, exited);
  }
};

}  // namespace rwtest
