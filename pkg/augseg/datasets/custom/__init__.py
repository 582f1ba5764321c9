from .folder_dataset import FolderSegDataset, create_folder_dataset, read_manifest
