"""Link-level simulator for a sensing-integrated DFT-spread multicarrier
system: waveform, channel, classical receiver, subspace/periodogram sensing,
a numpy neural receiver and an experiment harness."""

__version__ = "0.1.0"
