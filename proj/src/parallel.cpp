#include "idm/parallel.hpp"

#include <cstdlib>
#include <string>

namespace idm {

int default_thread_count() {
  if (const char* env = std::getenv("IDM_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
  return 1;
}

}  // namespace idm
