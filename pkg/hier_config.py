"""Default settings for hierarchical segmentation runs."""

# Training protocol defaults
TRAIN_DEFAULTS = {
    "epochs": 80,                # Total epochs per fold
    "batch_size": 4,
    "image_size": 640,           # Square input size in pixels
    "plateau_factor": 0.5,       # lr <- lr * factor after `patience` epochs without improvement
    "plateau_patience": 3,
    "min_lr": 0.001,
    "weight_decay": 0.01,        # AdamW decay
    "improvement_tolerance": 1e-5,
    "seed": 42,
    "folds": 5,
    "holdout_fraction": 0.10,
}

# Starting learning rates per model variant (1-D grid search results)
VARIANT_LEARNING_RATES = {
    "unet": 0.018,
    "hrnet": 0.022,
    "unet-h": 0.022,
    "hrnet-h": 0.024,
    "tiny": 0.01,
    "tiny-h": 0.01,
}

# Rasterization priority, high to low. Classes on the same tier share a priority.
PRIORITY_ORDER = [
    ["Composite"],
    ["Enamel"],
    ["Pulp"],
    ["Dentin"],
    ["Upper", "Lower"],  # alveolar bone, always below the tooth classes
]

# Components of at most this many pixels are dropped after overlap removal
MIN_COMPONENT_PIXELS = 50

# Overlay colours (RGB)
OVERLAY_PALETTE = {
    "Upper": (255, 255, 0),       # yellow
    "Lower": (255, 105, 180),     # pink
    "Pulp": (0, 0, 139),          # dark blue
    "Dentin": (255, 255, 255),    # white
    "Enamel": (255, 0, 0),        # red
    "Composite": (0, 200, 0),     # green
}
OVERLAY_ALPHA = 0.5

# Augmentation ranges
AUGMENTATION_DEFAULTS = {
    "blur_kernel": (25, 25),
    "blur_sigma": (0.001, 0.2),
    "brightness": 0.4,
    "contrast": 0.5,
    "saturation": 0.25,
    "hue": 0.01,
    "hflip_p": 0.5,
    "affine_p": 1.0,
    "rotation": (-50.0, 50.0),
    "translate": (20.0, 20.0),   # max |shift| in pixels, horizontal / vertical
    "scale": (0.85, 1.15),
    "shear": (-5.0, 5.0),
}

# Numerical constants
COMPOSITION_EPS = 1e-6
RESTRICT_THRESHOLD = 0.5
RESTRICTED_LOGIT = -1e4
DICE_EPS = 1e-6
CE_CLAMP = 1e-7
