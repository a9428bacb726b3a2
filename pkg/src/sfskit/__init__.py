"""Inverse rendering of lambertian scenes under second-order SH lighting.

Modules:
  types         shared domain types (LightSH, Mask, maps, Sample)
  shcore        SH basis, shading, rendering, loss terms
  photometrics  light solving, error metrics, the 19-light classifier
  autodiff      reverse-mode tensor library the networks train on
  nets          the three encoder-decoder architectures
  datagen       procedural ground-truth generator
  trainer       multi-stage mixed-supervision training
  io            FMAP / PNG / light-file persistence
  cli           command-line entry point
"""

__version__ = "0.1.0"
