"""Layer-wise probing toolkit for audio deepfake detection.

Frozen speech-encoder feature extraction with layer truncation, trainable
softmax-normalized layer weights, an FFN back-end with attentive statistical
pooling, EER evaluation, and layer-weight / truncation analysis tools.
"""

__version__ = "0.1.0"
