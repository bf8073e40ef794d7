#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "eatt/error.hpp"

int main(int argc, char** argv) {
  using namespace eatt::cli;

  if (const char* threads = std::getenv("EATT_THREADS"); threads && std::string(threads) != "1") {
    std::cerr << "eatt: EATT_THREADS must be 1 (got '" << threads << "')\n";
    return kExitUsage;
  }

  CLI::App app{"Energy-efficient attention: cost model, gradient checks and toy training"};
  app.require_subcommand(1);
  int status = kExitOk;
  register_energy(app, status);
  register_gradcheck(app, status);
  register_train(app, status);
  register_stats(app, status);
  register_audit(app, status);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const eatt::DivergenceError& e) {
    std::cerr << "eatt: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const eatt::Error& e) {
    std::cerr << "eatt: " << e.what() << '\n';
    return kExitUsage;
  }
  return status;
}
