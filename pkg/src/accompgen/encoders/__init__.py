"""Audio front-ends: semantic embeddings, acoustic codec, prompt space, corpus."""

from .codec import fit_synth_codec, synth_acoustic_decode, synth_acoustic_encode
from .corpus import CorpusSpec, generate_corpus, synthesize_track
from .prompt import SynthPromptEncoder, describe_audio, hashed_prompt_encode
from .semantic import SynthSemanticEncoder, synth_semantic_encode
from .wav import read_wav, write_wav

__all__ = [
    "CorpusSpec",
    "SynthPromptEncoder",
    "SynthSemanticEncoder",
    "describe_audio",
    "fit_synth_codec",
    "generate_corpus",
    "hashed_prompt_encode",
    "read_wav",
    "synth_acoustic_decode",
    "synth_acoustic_encode",
    "synth_semantic_encode",
    "synthesize_track",
    "write_wav",
]
