#include "rwdecoy/resetloop/sba.hpp"

namespace rwdecoy::resetloop {

SbaReport analyze_trace(const simcore::ProcessRun& run) {
  if (run.trace().empty()) {
    throw Error(ErrorCode::no_calls, "process " + std::to_string(run.pid()) + " made no API calls");
  }
  SbaReport r;
  r.entry_point = run.program().entry_point;
  r.calls = run.trace();
  r.stack_snapshot = run.launch_stack();
  return r;
}

SbaReport analyze_program(const simcore::SimProgram& program, const simcore::VirtualFs& fs,
                          simcore::KernelOptions options, std::uint64_t max_steps) {
  simcore::Kernel kernel(options);
  kernel.fs() = fs;
  auto run = kernel.launch(program, true);
  kernel.resume(run);
  kernel.run(run, max_steps);
  return analyze_trace(run);
}

}  // namespace rwdecoy::resetloop
