"""floeberg: sea-ice classification and freeboard retrieval from 2 m resampled
photon altimetry tracks.

Subsystems: geo (polar stereographic projection, label rasters, drift
shifts), ingest (photon tracks, 2 m resampling, features, synthetic
generator), autolabel (raster-to-track class transfer), nnet (from-scratch
MLP / LSTM classifiers with focal loss and Adam), dtrain (simulated
synchronous data parallelism over a ring), surface (lead detection, local
sea level, freeboard), runtime (chunked parallel map-reduce), cli (the
`floeberg` command).
"""

__version__ = "0.1.0"

from . import autolabel, config, dtrain, geo, ingest, nnet, pipeline, runtime, surface

__all__ = ["autolabel", "config", "dtrain", "geo", "ingest", "nnet", "pipeline",
           "runtime", "surface", "__version__"]
