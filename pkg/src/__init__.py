"""OrdiStage: explainable ordinal staging with an autoencoder-regularised ViT"""
