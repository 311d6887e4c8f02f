#pragma once

// Umbrella header for the geometric 4D stitching toolkit.

#include "stitch4d/addmask.hpp"
#include "stitch4d/camera.hpp"
#include "stitch4d/core.hpp"
#include "stitch4d/frames.hpp"
#include "stitch4d/io.hpp"
#include "stitch4d/mask_ops.hpp"
#include "stitch4d/pipeline.hpp"
#include "stitch4d/preprocess.hpp"
#include "stitch4d/raster.hpp"
#include "stitch4d/refine.hpp"
#include "stitch4d/stitch.hpp"
#include "stitch4d/synthetic.hpp"
#include "stitch4d/trajeval.hpp"
#include "stitch4d/types.hpp"
