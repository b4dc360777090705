#pragma once

#include <vector>

#include "rwdecoy/simcore/kernel.hpp"

namespace rwdecoy::resetloop {

using simcore::Address;
using simcore::ApiEvent;
using simcore::StackRegs;

// Call log of one infection pass: each executed API call with its
// arguments, caller address and return target, plus the launch stack.
struct SbaReport {
  Address entry_point = 0;
  std::vector<ApiEvent> calls;
  StackRegs stack_snapshot;
};

// Throws Error(no_calls) when the run made no API calls.
SbaReport analyze_trace(const simcore::ProcessRun& run);

// Runs `program` to completion in a scratch kernel over a copy of `fs`,
// with nothing interposed, and analyzes the result.
SbaReport analyze_program(const simcore::SimProgram& program, const simcore::VirtualFs& fs,
                          simcore::KernelOptions options = {}, std::uint64_t max_steps = 1'000'000);

}  // namespace rwdecoy::resetloop
