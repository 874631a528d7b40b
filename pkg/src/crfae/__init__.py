"""crfae: a Bi-LSTM-CNN-CRF sequence labeller with feature auto-encoder losses."""

__version__ = "0.1.0"
