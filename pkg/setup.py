import setuptools

from muslcat import __version__, __author__

setuptools.setup(
    name='muslcat',
    version=__version__,
    author=__author__,
    description='multi-scale attention networks for waveform music tagging, in numpy',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    classifiers=[
        'Development Status :: 4 - Beta',

        'Intended Audience :: Developers',
        'Intended Audience :: Science/Research',

        'License :: OSI Approved :: MIT License',

        'Programming Language :: Python :: 3.8',
        'Topic :: Multimedia :: Sound/Audio :: Analysis',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    keywords='music tagging attention convolution waveform',
    packages=setuptools.find_packages(exclude=['tests', 'examples', 'examples.*']),
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.20',
        'scipy>=1.6',
        'pydantic>=2',
        'tqdm',
    ],
    entry_points={
        'console_scripts': ['muslcat=muslcat.cli:main'],
    },
)
