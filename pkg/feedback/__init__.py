from feedback.codec import CodecConfig, CodecModel, build, train
from feedback.markovnet import MarkovNetPipeline, estimate_gamma, train_pipeline
