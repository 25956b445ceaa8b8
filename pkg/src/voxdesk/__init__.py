"""Desk-scale real-time voice analysis: log-mel features, a speech/gender/speaker
cascade, triplet-trained speaker embeddings, centroid diarization, an emotion
head and conversation metrics."""

__version__ = "0.1.0"
