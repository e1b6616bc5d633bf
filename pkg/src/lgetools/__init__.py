"""Mask-volume tooling for LGE cardiac MR segmentation work.

Subpackages and modules:
  volume   - mask-volume data model and bit-exact container format
  phantom  - synthetic annulus phantom with exact ground truth
  roi      - LV centering, crop/pad, and intensity normalization
  seg5sd   - remote-ROI statistics and the 5-SD threshold protocol
  perturb  - seeded mask/intensity corruption with a replayable log
  metrics  - Dice/AVD/AVDR, detection tables, exact binomial CIs
  stats    - concordance, Bland-Altman, Wilcoxon, chi-square, kappa
  rating   - blinded A/B rating service and its aggregation analyses
"""

from .errors import (
    EmptyMaskError,
    LgeToolsError,
    UndefinedStatisticError,
    ValidationError,
    VolumeFormatError,
)
from .volume import (
    INFARCT_CLASSES,
    LV_CLASSES,
    MYOCARDIUM_CLASSES,
    ClassId,
    MaskVolume,
    Spacing,
    class_volume_ml,
    label_mask,
    load_volume,
    save_volume,
)
from .phantom import AngleRange, GroundTruth, MvoCore, PhantomSpec, ScarWedge, make_phantom

__version__ = "0.1.0"
