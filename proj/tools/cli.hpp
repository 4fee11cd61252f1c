#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace natgrad::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 1;
inline constexpr int kNumericError = 2;

/// Entry point behind the `natgrad` binary; `args` excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cmd_train(const std::string& config_path, const std::string& out_dir, const std::string& seed,
              std::ostream& out, std::ostream& err);
int cmd_check(const std::string& suite, std::uint64_t seed, std::ostream& out, std::ostream& err);
int cmd_experiment(const std::string& name, const std::string& config_path, const std::string& out_dir,
                   const std::string& seed, std::ostream& out, std::ostream& err);

}  // namespace natgrad::cli
