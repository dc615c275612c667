from pathlib import Path

from setuptools import find_packages, setup

here = Path(__file__).parent
requirements = [
    line.strip()
    for line in (here / 'requirements.txt').read_text(encoding='utf-8').splitlines()
    if line.strip() and not line.startswith('#') and not line.startswith('pytest')
]

setup(
    name='ketra',
    version='1.0.0',
    description='Knowledge graph embeddings via similarity-enriched tensor factorization',
    long_description=(here / 'README.md').read_text(encoding='utf-8'),
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=('tests', 'tests.*', 'examples', 'examples.*')),
    python_requires='>=3.10',
    install_requires=requirements,
    entry_points={'console_scripts': ['ketra=ketra.cli:main']},
)
