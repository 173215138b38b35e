"""Multilingual subject indexing toolkit.

Trainable suggestion backends (lexical matching and a partitioned label
tree over TF-IDF features), weighted-exponent score fusion, LLM-assisted
translation / synthetic data / candidate ranking, ranking metrics and
fusion hyperparameter search, all driven by a single CLI.
"""

__version__ = "0.1.0"
