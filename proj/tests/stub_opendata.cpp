// Serves a corpus through the OpenData stub until killed.
//
//   stub_opendata CORPUS_DIR PORT_FILE

#include <chrono>
#include <fstream>
#include <iostream>
#include <thread>

#include "diavgeia/corpus.hpp"
#include "diavgeia/harvester.hpp"

using namespace diavgeia;

int main(int argc, char** argv)
{
    if (argc != 3) {
        std::cerr << "usage: stub_opendata CORPUS_DIR PORT_FILE\n";
        return 2;
    }
    const CorpusLayout layout(argv[1]);
    std::vector<StoredDocument> docs;
    for (const auto& ada : layout.list_adas()) docs.push_back(load_document(layout, ada));
    StubApi stub(std::move(docs));
    {
        const auto tmp = std::string(argv[2]) + ".tmp";
        std::ofstream(tmp) << stub.base_url() << "\n";
        std::filesystem::rename(tmp, argv[2]);
    }
    for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
}
