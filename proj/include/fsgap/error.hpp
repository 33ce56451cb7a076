#pragma once

#include <stdexcept>
#include <string>

namespace fsgap {

// Every failure the library can signal. The CLI maps these onto exit codes
// (config / data / solver), so keep the enum stable.
enum class errc {
  invalid_argument,
  infeasible_sampling,
  bad_magic,
  unsupported_version,
  truncated_payload,
  dimension_mismatch,
  non_finite_payload,
  missing_file,
  dim_mismatch_across_videos,
  duplicate_video_id,
  grs_out_of_range,
  grs_missing,
  grs_out_of_task_range,
  insufficient_class_size,
  empty_set,
  degenerate,
  numerical_underflow,
  length_mismatch,
  empty_input,
  cell_mismatch,
  io_error,
  bad_manifest,
  bad_report,
  bad_config,
};

class Error : public std::runtime_error {
public:
  Error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }

private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, errc code, const std::string& what) {
  if (!cond) raise(code, what);
}

}  // namespace fsgap
