#pragma once

#include "effdepth/backends.hpp"
#include "effdepth/bimodal.hpp"
#include "effdepth/boost.hpp"
#include "effdepth/depth_file.hpp"
#include "effdepth/errors.hpp"
#include "effdepth/evaluate.hpp"
#include "effdepth/fsutil.hpp"
#include "effdepth/grid.hpp"
#include "effdepth/image.hpp"
#include "effdepth/losses.hpp"
#include "effdepth/manifest.hpp"
#include "effdepth/metrics.hpp"
#include "effdepth/pfm.hpp"
#include "effdepth/png_io.hpp"
#include "effdepth/subprocess.hpp"
#include "effdepth/tiling.hpp"
