#pragma once

// glibc's resolv.h (dragged in by httplib) defines `_res`, which
// collides with Eigen kernel parameter names. Parsing Eigen first and
// dropping the macro keeps include order irrelevant for callers.
#include <Eigen/Core>

#include "httplib.h"

#ifdef _res
#undef _res
#endif
